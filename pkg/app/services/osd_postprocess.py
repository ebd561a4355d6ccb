from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.core.errors import DecoderSimError, DimensionMismatchError
from app.core.gf2 import BitVec, SparseBitMatrix, mat_vec, pivot_columns, solve
from app.services.mp_decoder import LlrVector


@dataclass(frozen=True)
class OsdSelection:
    ordered_cols: Tuple[int, ...]
    basis_cols: Tuple[int, ...]
    complement_cols: Tuple[int, ...]


class Osd0Decoder:
    """Order-0 ordered statistics post-processing bound to one parity-check matrix."""

    def __init__(self, hz: SparseBitMatrix) -> None:
        self.hz = hz
        self._dense = hz.to_dense()

    def select(self, soft: LlrVector) -> OsdSelection:
        soft = np.asarray(soft, dtype=np.float64)
        if soft.shape != (self.hz.cols,):
            raise DimensionMismatchError(f"soft vector length {soft.size} does not match {self.hz.cols} bits")
        order = np.argsort(np.abs(soft), kind="stable")
        pivots = pivot_columns(self._dense[:, order])
        basis = order[pivots]
        in_basis = np.zeros(self.hz.cols, dtype=bool)
        in_basis[basis] = True
        complement = order[~in_basis[order]]
        return OsdSelection(
            ordered_cols=tuple(int(c) for c in order),
            basis_cols=tuple(int(c) for c in basis),
            complement_cols=tuple(int(c) for c in complement),
        )

    def decode(self, syndrome: BitVec, mp_hard: BitVec, soft: LlrVector) -> BitVec:
        syndrome = np.asarray(syndrome).astype(np.uint8) & 1
        mp_hard = np.asarray(mp_hard).astype(np.uint8) & 1
        if syndrome.shape != (self.hz.rows,) or mp_hard.shape != (self.hz.cols,):
            raise DimensionMismatchError("syndrome or hard decision does not match the matrix")
        selection = self.select(soft)
        basis = list(selection.basis_cols)
        estimate = mp_hard.copy()
        estimate[basis] = 0
        rhs = syndrome ^ mat_vec(self.hz, estimate)
        values = solve(self.hz.submatrix(range(self.hz.rows), basis), rhs)
        if values is None:
            raise DecoderSimError("syndrome lies outside the column space of the parity-check matrix")
        estimate[basis] = values
        return estimate


def osd0_decode(hz: SparseBitMatrix, syndrome: BitVec, mp_hard: BitVec, soft: LlrVector) -> BitVec:
    return Osd0Decoder(hz).decode(syndrome, mp_hard, soft)
