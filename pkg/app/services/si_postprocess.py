from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import CodeValidationError, DimensionMismatchError
from app.core.gf2 import BitVec, SparseBitMatrix, mat_vec, solve
from app.schemas.decoding import DecoderConfig, SiConfig
from app.services.codes import CssCode
from app.services.mp_decoder import (
    DecodeOutcome,
    LlrVector,
    MessagePassingDecoder,
    hard_decision,
    restrict_layers,
)

logger = logging.getLogger(__name__)

MP_NONCONVERGENCE = "mp_nonconvergence"
UNSOLVABLE_SYSTEM = "unsolvable_system"


@dataclass(frozen=True)
class Restriction:
    in_cols: Tuple[int, ...]
    out_cols: Tuple[int, ...]
    in_rows: Tuple[int, ...]
    out_rows: Tuple[int, ...]
    h_in: SparseBitMatrix
    a: SparseBitMatrix
    h_out: SparseBitMatrix

    def assemble(self, e_in: BitVec, e_out: BitVec) -> BitVec:
        estimate = np.zeros(len(self.in_cols) + len(self.out_cols), dtype=np.uint8)
        estimate[list(self.in_cols)] = e_in
        estimate[list(self.out_cols)] = e_out
        return estimate

    def in_rows_even(self) -> bool:
        return all(w % 2 == 0 for w in self.h_in.row_weights())


@dataclass(frozen=True)
class SiOutcome:
    result: Literal["success", "failure"]
    estimate: Optional[BitVec]
    inactivations_used: int
    failure_breakdown: Dict[str, int]
    initial: DecodeOutcome
    iterations: int
    inactivated_rows: Tuple[int, ...] = field(default=())

    @property
    def success(self) -> bool:
        return self.result == "success"

    @property
    def post_invoked(self) -> bool:
        return not self.initial.converged


def check_reliability(row: int, soft: LlrVector, hx: SparseBitMatrix) -> float:
    soft = np.asarray(soft, dtype=np.float64)
    if soft.shape != (hx.cols,):
        raise DimensionMismatchError(f"soft vector length {soft.size} does not match {hx.cols} bits")
    if row < 0 or row >= hx.rows:
        raise IndexError(f"check index {row} out of range")
    return float(np.abs(soft[list(hx.row_supports[row])]).sum())


def check_reliabilities(soft: LlrVector, hx: SparseBitMatrix) -> np.ndarray:
    soft = np.asarray(soft, dtype=np.float64)
    if soft.shape != (hx.cols,):
        raise DimensionMismatchError(f"soft vector length {soft.size} does not match {hx.cols} bits")
    if hx.rows == 0:
        return np.zeros(0)
    return np.asarray(hx.csr @ np.abs(soft)).ravel()


def rank_of_check(row: int, reliabilities: Sequence[float]) -> int:
    values = np.asarray(reliabilities, dtype=np.float64)
    return int(np.count_nonzero(values < values[row]))


def reliability_order(reliabilities: Sequence[float]) -> np.ndarray:
    """Check indices by increasing reliability; ties keep ascending row index."""
    return np.argsort(np.asarray(reliabilities, dtype=np.float64), kind="stable")


def delta_metric(e: BitVec, r_x: BitVec, hard: BitVec, soft: LlrVector) -> float:
    """Change in soft-information cost between the equivalent errors e and e + r_x."""
    e, r_x, hard = (np.asarray(v, dtype=np.uint8) for v in (e, r_x, hard))
    soft = np.asarray(soft, dtype=np.float64)
    if not (e.shape == r_x.shape == hard.shape == soft.shape):
        raise DimensionMismatchError("delta_metric inputs must share one length")
    magnitude = np.abs(soft)
    first = hard ^ e
    second = first ^ r_x
    return float(magnitude[first == 1].sum() - magnitude[second == 1].sum())


def delta_metric_signed(e: BitVec, r_x: BitVec, soft: LlrVector) -> float:
    """Closed form of ``delta_metric``: sum over supp(r_x) of (-1)^((e + r_x)_i) * soft_i."""
    e, r_x = np.asarray(e, dtype=np.uint8), np.asarray(r_x, dtype=np.uint8)
    soft = np.asarray(soft, dtype=np.float64)
    other = e ^ r_x
    idx = np.flatnonzero(r_x)
    signs = np.where(other[idx] == 1, -1.0, 1.0)
    return float((signs * soft[idx]).sum())


def restrict(hz: SparseBitMatrix, support: Sequence[int]) -> Restriction:
    in_cols = tuple(sorted({int(c) for c in support}))
    if not in_cols:
        raise ValueError("inactivated support must be non-empty")
    if in_cols[0] < 0 or in_cols[-1] >= hz.cols:
        raise IndexError("inactivated support outside the column range")
    in_set = set(in_cols)
    out_cols = tuple(c for c in range(hz.cols) if c not in in_set)
    touched = set()
    for c in in_cols:
        touched.update(hz.col_supports[c])
    in_rows = tuple(sorted(touched))
    out_rows = tuple(r for r in range(hz.rows) if r not in touched)

    if hz.submatrix(out_rows, in_cols).nnz:
        raise CodeValidationError("restricted rows still touch the inactivated columns")

    return Restriction(
        in_cols=in_cols,
        out_cols=out_cols,
        in_rows=in_rows,
        out_rows=out_rows,
        h_in=hz.submatrix(in_rows, in_cols),
        a=hz.submatrix(in_rows, out_cols),
        h_out=hz.submatrix(out_rows, out_cols),
    )


class StabilizerInactivationDecoder:
    """MP decoding followed by stabilizer inactivation when MP fails.

    Restrictions and the decoders built on them are cached per X-check, so a
    single instance is meant to serve every trial of an experiment.
    """

    def __init__(self, code: CssCode, mp: DecoderConfig, si: SiConfig) -> None:
        self.code = code
        self.mp = mp
        self.si = si
        self.lambda_max = si.resolve_lambda_max(code.m_x)
        self._main = MessagePassingDecoder(code.hz, mp)
        restricted_iters = si.restricted_iters or mp.max_iters
        self._restricted_config = mp.with_iters(restricted_iters)
        self._zero_llr_decoder: Optional[MessagePassingDecoder] = None
        self._cache: Dict[int, Tuple[Restriction, Optional[MessagePassingDecoder]]] = {}

    def _restriction(self, row: int) -> Tuple[Restriction, Optional[MessagePassingDecoder]]:
        cached = self._cache.get(row)
        if cached is None:
            restriction = restrict(self.code.hz, self.code.hx.row_supports[row])
            decoder = None
            if restriction.h_out.rows and self.si.mode == "restrict":
                config = self._restricted_config
                if config.layers is not None:
                    config = config.model_copy(
                        update={"layers": restrict_layers(config.layers, restriction.out_rows)}
                    )
                decoder = MessagePassingDecoder(restriction.h_out, config)
            cached = (restriction, decoder)
            self._cache[row] = cached
        return cached

    def _zero_llr(self) -> MessagePassingDecoder:
        if self._zero_llr_decoder is None:
            self._zero_llr_decoder = MessagePassingDecoder(self.code.hz, self._restricted_config)
        return self._zero_llr_decoder

    def _decode_outside(
        self, restriction: Restriction, decoder: Optional[MessagePassingDecoder], syndrome: BitVec, priors: LlrVector
    ) -> Tuple[Optional[BitVec], int]:
        out_cols = list(restriction.out_cols)
        if self.si.mode == "zero_llr":
            zeroed = priors.copy()
            zeroed[list(restriction.in_cols)] = 0.0
            outcome = self._zero_llr().decode(syndrome, zeroed)
            e_out = outcome.hard[out_cols]
            s_out = syndrome[list(restriction.out_rows)]
            if np.array_equal(mat_vec(restriction.h_out, e_out), s_out):
                return e_out, outcome.iterations
            return None, outcome.iterations
        if decoder is None:
            return hard_decision(priors[out_cols]), 0
        outcome = decoder.decode(syndrome[list(restriction.out_rows)], priors[out_cols])
        if not outcome.converged:
            return None, outcome.iterations
        return outcome.hard, outcome.iterations

    def decode(self, syndrome: BitVec, priors: LlrVector) -> SiOutcome:
        syndrome = np.asarray(syndrome).astype(np.uint8) & 1
        priors = np.asarray(priors, dtype=np.float64)
        if syndrome.shape != (self.code.m_z,):
            raise DimensionMismatchError(f"syndrome length {syndrome.size} does not match {self.code.m_z} checks")

        initial = self._main.decode(syndrome, priors)
        breakdown = {MP_NONCONVERGENCE: 0, UNSOLVABLE_SYSTEM: 0}
        if initial.converged:
            return SiOutcome("success", initial.hard, 0, breakdown, initial, initial.iterations)

        order = reliability_order(check_reliabilities(initial.soft, self.code.hx))
        iterations = initial.iterations
        tried: List[int] = []
        for lam in range(1, self.lambda_max + 1):
            row = int(order[lam - 1])
            tried.append(row)
            if not self.code.hx.row_supports[row]:
                breakdown[UNSOLVABLE_SYSTEM] += 1
                continue
            restriction, decoder = self._restriction(row)
            e_out, used = self._decode_outside(restriction, decoder, syndrome, priors)
            iterations += used
            if e_out is None:
                breakdown[MP_NONCONVERGENCE] += 1
                logger.debug("SI: check %d (lambda=%d) restricted MP did not converge", row, lam)
                continue
            rhs = syndrome[list(restriction.in_rows)] ^ mat_vec(restriction.a, e_out)
            e_in = solve(restriction.h_in, rhs)
            if e_in is None:
                breakdown[UNSOLVABLE_SYSTEM] += 1
                logger.debug("SI: check %d (lambda=%d) system has no solution", row, lam)
                continue
            estimate = restriction.assemble(e_in, e_out)
            return SiOutcome("success", estimate, lam, breakdown, initial, iterations, tuple(tried))

        return SiOutcome("failure", None, self.lambda_max, breakdown, initial, iterations, tuple(tried))


def si_decode(
    code: CssCode, syndrome: BitVec, priors: LlrVector, mp: DecoderConfig, si: SiConfig
) -> SiOutcome:
    return StabilizerInactivationDecoder(code, mp, si).decode(syndrome, priors)
