from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigError, DimensionMismatchError
from app.core.gf2 import BitVec, SparseBitMatrix, mat_vec
from app.schemas.decoding import DecoderConfig

LlrVector = np.ndarray

# Largest tanh product fed to atanh; 2 * atanh(1 - 1e-15) is about 35.9.
SP_PRODUCT_LIMIT = 1.0 - 1e-15


@dataclass(frozen=True)
class DecodeOutcome:
    hard: BitVec
    soft: LlrVector
    converged: bool
    iterations: int


def hard_decision(soft: LlrVector) -> BitVec:
    return (np.asarray(soft) < 0).astype(np.uint8)


@dataclass(frozen=True)
class _Segments:
    """Edges of a group of non-empty check rows, laid out contiguously per row."""

    rows: np.ndarray
    edges: np.ndarray
    cols: np.ndarray
    starts: np.ndarray
    seg_ids: np.ndarray
    disjoint: bool


def greedy_layers(matrix: SparseBitMatrix) -> Tuple[Tuple[int, ...], ...]:
    """Group consecutive rows into layers whose supports are pairwise disjoint.

    Under such a layering every bit meets each layer at most once, so layered
    and serial schedules produce identical messages.
    """
    layers: List[Tuple[int, ...]] = []
    current: List[int] = []
    touched: set = set()
    for r, row in enumerate(matrix.row_supports):
        if current and touched.intersection(row):
            layers.append(tuple(current))
            current, touched = [], set()
        current.append(r)
        touched.update(row)
    if current:
        layers.append(tuple(current))
    return tuple(layers)


def restrict_layers(
    layers: Optional[Sequence[Sequence[int]]], kept_rows: Sequence[int]
) -> Optional[Tuple[Tuple[int, ...], ...]]:
    """Renumber a layer partition onto a subset of rows, dropping layers left empty."""
    if layers is None:
        return None
    position = {int(r): i for i, r in enumerate(kept_rows)}
    restricted = []
    for layer in layers:
        mapped = tuple(position[r] for r in layer if r in position)
        if mapped:
            restricted.append(mapped)
    return tuple(restricted)


class MessagePassingDecoder:
    """Syndrome-based SP / MS / NMS decoding on the Tanner graph of one matrix.

    The instance precomputes the edge layout once; every call to ``decode``
    allocates its own message state, so one instance can serve many trials.
    """

    def __init__(self, matrix: SparseBitMatrix, config: DecoderConfig) -> None:
        self.matrix = matrix
        self.config = config
        degrees = np.asarray(matrix.row_weights(), dtype=np.int64)
        self._row_ptr = np.zeros(matrix.rows + 1, dtype=np.int64)
        self._row_ptr[1:] = np.cumsum(degrees)
        self._edge_cols = np.fromiter(
            (c for row in matrix.row_supports for c in row), dtype=np.int64, count=int(self._row_ptr[-1])
        )
        self._degrees = degrees
        self._empty_rows = np.flatnonzero(degrees == 0)
        self._all = self._segments(range(matrix.rows))
        if config.schedule == "flooding":
            self._layers: List[_Segments] = []
        elif config.schedule == "serial":
            self._layers = [self._segments([r]) for r in range(matrix.rows) if degrees[r] > 0]
        else:
            layers = config.layers if config.layers is not None else greedy_layers(matrix)
            self._validate_partition(layers)
            self._layers = [seg for seg in (self._segments(layer) for layer in layers) if seg.rows.size]

    def _validate_partition(self, layers: Sequence[Sequence[int]]) -> None:
        seen = sorted(r for layer in layers for r in layer)
        if seen != list(range(self.matrix.rows)):
            raise ConfigError("layers must partition the row indices of the parity-check matrix")

    def _segments(self, rows: Sequence[int]) -> _Segments:
        kept = np.asarray([r for r in rows if self._degrees[r] > 0], dtype=np.int64)
        if kept.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            return _Segments(kept, empty, empty, empty, empty, True)
        degrees = self._degrees[kept]
        edges = np.concatenate([np.arange(self._row_ptr[r], self._row_ptr[r + 1]) for r in kept])
        starts = np.zeros(kept.size, dtype=np.int64)
        starts[1:] = np.cumsum(degrees)[:-1]
        seg_ids = np.repeat(np.arange(kept.size), degrees)
        cols = self._edge_cols[edges]
        disjoint = np.unique(cols).size == cols.size
        return _Segments(kept, edges, cols, starts, seg_ids, bool(disjoint))

    def _check_update(self, v2c: np.ndarray, seg: _Segments, syndrome: BitVec) -> np.ndarray:
        """Check-to-bit messages for every edge of ``seg`` from the bit-to-check inputs."""
        cfg = self.config
        negative = v2c < 0
        parity = np.add.reduceat(negative.astype(np.int64), seg.starts) & 1
        flip = (parity ^ syndrome[seg.rows].astype(np.int64))[seg.seg_ids].astype(bool) ^ negative
        magnitude = np.abs(v2c)

        if cfg.algorithm == "sp":
            t = np.tanh(0.5 * magnitude)
            zero = t == 0.0
            logs = np.log(np.where(zero, 1.0, t))
            seg_log = np.add.reduceat(logs, seg.starts)
            seg_zero = np.add.reduceat(zero.astype(np.int64), seg.starts)
            others_zero = seg_zero[seg.seg_ids] - zero
            with np.errstate(over="ignore"):
                product = np.where(others_zero > 0, 0.0, np.exp(seg_log[seg.seg_ids] - logs))
            out = 2.0 * np.arctanh(np.minimum(product, SP_PRODUCT_LIMIT))
        else:
            min1 = np.minimum.reduceat(magnitude, seg.starts)
            at_min = np.flatnonzero(magnitude == min1[seg.seg_ids])
            _, first = np.unique(seg.seg_ids[at_min], return_index=True)
            argmin = at_min[first]
            masked = magnitude.copy()
            masked[argmin] = np.inf
            min2 = np.minimum.reduceat(masked, seg.starts)
            out = min1[seg.seg_ids]
            out[argmin] = min2
            if cfg.algorithm == "nms":
                out = cfg.alpha * out

        out = np.minimum(out, cfg.clamp)
        return np.where(flip, -out, out)

    def decode(self, syndrome: BitVec, priors: LlrVector) -> DecodeOutcome:
        syndrome = np.asarray(syndrome).astype(np.uint8) & 1
        priors = np.asarray(priors, dtype=np.float64)
        if syndrome.shape != (self.matrix.rows,):
            raise DimensionMismatchError(
                f"syndrome length {syndrome.size} does not match {self.matrix.rows} checks"
            )
        if priors.shape != (self.matrix.cols,):
            raise DimensionMismatchError(
                f"prior length {priors.size} does not match {self.matrix.cols} bits"
            )

        clamp = self.config.clamp
        soft = np.clip(priors, -clamp, clamp)
        hard = hard_decision(soft)
        early_stop = self.config.early_stop
        if early_stop and np.array_equal(mat_vec(self.matrix, hard), syndrome):
            return DecodeOutcome(hard=hard, soft=soft, converged=True, iterations=0)
        if self._empty_rows.size and syndrome[self._empty_rows].any():
            return DecodeOutcome(hard=hard, soft=soft, converged=False, iterations=0)

        c2v = np.zeros(self._edge_cols.size)
        for iteration in range(1, self.config.max_iters + 1):
            if self.config.schedule == "flooding":
                soft = self._flooding_sweep(soft, priors, c2v, syndrome)
            else:
                self._layered_sweep(soft, c2v, syndrome)
            hard = hard_decision(soft)
            if early_stop and np.array_equal(mat_vec(self.matrix, hard), syndrome):
                return DecodeOutcome(hard=hard, soft=soft.copy(), converged=True, iterations=iteration)
        converged = not early_stop and np.array_equal(mat_vec(self.matrix, hard), syndrome)
        return DecodeOutcome(
            hard=hard, soft=soft.copy(), converged=bool(converged), iterations=self.config.max_iters
        )

    def _flooding_sweep(
        self, soft: LlrVector, priors: LlrVector, c2v: np.ndarray, syndrome: BitVec
    ) -> LlrVector:
        clamp = self.config.clamp
        seg = self._all
        if seg.rows.size:
            v2c = np.clip(soft[seg.cols] - c2v[seg.edges], -clamp, clamp)
            c2v[seg.edges] = self._check_update(v2c, seg, syndrome)
        totals = np.bincount(self._edge_cols, weights=c2v, minlength=self.matrix.cols)
        return np.clip(priors + totals, -clamp, clamp)

    def _layered_sweep(self, soft: LlrVector, c2v: np.ndarray, syndrome: BitVec) -> None:
        clamp = self.config.clamp
        for seg in self._layers:
            old = c2v[seg.edges]
            v2c = np.clip(soft[seg.cols] - old, -clamp, clamp)
            new = self._check_update(v2c, seg, syndrome)
            if seg.disjoint:
                soft[seg.cols] = np.clip(v2c + new, -clamp, clamp)
            else:
                np.add.at(soft, seg.cols, new - old)
                np.clip(soft, -clamp, clamp, out=soft)
            c2v[seg.edges] = new


def decode(
    matrix: SparseBitMatrix, syndrome: BitVec, priors: LlrVector, config: DecoderConfig
) -> DecodeOutcome:
    return MessagePassingDecoder(matrix, config).decode(syndrome, priors)
