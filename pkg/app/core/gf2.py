from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from app.core.errors import DimensionMismatchError

# Binary vectors are one-dimensional uint8 arrays holding 0/1 values.
BitVec = np.ndarray


def as_bitvec(values: Iterable[int] | np.ndarray) -> BitVec:
    vec = np.asarray(values, dtype=np.int64).ravel() & 1
    return vec.astype(np.uint8)


def zeros(length: int) -> BitVec:
    return np.zeros(length, dtype=np.uint8)


def weight(vec: BitVec) -> int:
    return int(np.count_nonzero(vec))


class SparseBitMatrix:
    """Immutable sparse matrix over GF(2).

    Rows are stored as sorted tuples of column indices; the column adjacency is
    derived once and always matches the row adjacency. Products go through a
    cached ``scipy.sparse.csr_matrix``.
    """

    def __init__(self, rows: int, cols: int, row_supports: Sequence[Iterable[int]]) -> None:
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if len(row_supports) != rows:
            raise DimensionMismatchError(
                f"expected {rows} row supports, got {len(row_supports)}"
            )
        normalized: List[Tuple[int, ...]] = []
        col_lists: List[List[int]] = [[] for _ in range(cols)]
        for r, raw in enumerate(row_supports):
            entries = sorted(int(c) for c in raw)
            for i, c in enumerate(entries):
                if c < 0 or c >= cols:
                    raise ValueError(f"column index {c} out of range in row {r}")
                if i and entries[i - 1] == c:
                    raise ValueError(f"duplicate column index {c} in row {r}")
                col_lists[c].append(r)
            normalized.append(tuple(entries))
        self._rows = rows
        self._cols = cols
        self._row_supports: Tuple[Tuple[int, ...], ...] = tuple(normalized)
        self._col_supports: Tuple[Tuple[int, ...], ...] = tuple(tuple(c) for c in col_lists)

    @classmethod
    def from_dense(cls, array: np.ndarray | Sequence[Sequence[int]]) -> "SparseBitMatrix":
        dense = np.asarray(array, dtype=np.int64)
        if dense.ndim != 2:
            raise DimensionMismatchError("dense matrix must be two-dimensional")
        dense = dense & 1
        rows, cols = dense.shape
        return cls(rows, cols, [np.flatnonzero(dense[r]).tolist() for r in range(rows)])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SparseBitMatrix":
        return cls(rows, cols, [()] * rows)

    @classmethod
    def identity(cls, size: int) -> "SparseBitMatrix":
        return cls(size, size, [(i,) for i in range(size)])

    @property
    def rows(self) -> int:
        return self._rows

    @property
    def cols(self) -> int:
        return self._cols

    @property
    def shape(self) -> Tuple[int, int]:
        return self._rows, self._cols

    @property
    def row_supports(self) -> Tuple[Tuple[int, ...], ...]:
        return self._row_supports

    @property
    def col_supports(self) -> Tuple[Tuple[int, ...], ...]:
        return self._col_supports

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self._row_supports)

    def row_weights(self) -> List[int]:
        return [len(r) for r in self._row_supports]

    def col_weights(self) -> List[int]:
        return [len(c) for c in self._col_supports]

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        indptr = np.zeros(self._rows + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.row_weights(), dtype=np.int64)
        indices = np.fromiter(
            (c for row in self._row_supports for c in row), dtype=np.int64, count=int(indptr[-1])
        )
        data = np.ones(indices.size, dtype=np.int32)
        return sparse.csr_matrix((data, indices, indptr), shape=(self._rows, self._cols))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self._rows, self._cols), dtype=np.uint8)
        for r, row in enumerate(self._row_supports):
            dense[r, list(row)] = 1
        return dense

    def transpose(self) -> "SparseBitMatrix":
        return SparseBitMatrix(self._cols, self._rows, self._col_supports)

    def row_vector(self, row: int) -> BitVec:
        if row < 0 or row >= self._rows:
            raise IndexError(f"row index {row} out of range")
        vec = zeros(self._cols)
        vec[list(self._row_supports[row])] = 1
        return vec

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> "SparseBitMatrix":
        """Rows and columns are taken in the given order; column indices are renumbered."""
        position = {int(c): i for i, c in enumerate(cols)}
        supports = []
        for r in rows:
            supports.append([position[c] for c in self._row_supports[int(r)] if c in position])
        return SparseBitMatrix(len(rows), len(cols), supports)

    def hstack(self, other: "SparseBitMatrix") -> "SparseBitMatrix":
        if other.rows != self._rows:
            raise DimensionMismatchError("hstack requires equal row counts")
        shift = self._cols
        supports = [
            list(a) + [c + shift for c in b]
            for a, b in zip(self._row_supports, other.row_supports)
        ]
        return SparseBitMatrix(self._rows, self._cols + other.cols, supports)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseBitMatrix):
            return NotImplemented
        return self.shape == other.shape and self._row_supports == other.row_supports

    def __hash__(self) -> int:
        return hash((self.shape, self._row_supports))

    def __repr__(self) -> str:
        return f"SparseBitMatrix(rows={self._rows}, cols={self._cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class RrefResult:
    rref: SparseBitMatrix
    pivot_cols: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.pivot_cols)


def mat_vec(matrix: SparseBitMatrix, vec: BitVec) -> BitVec:
    vec = np.asarray(vec)
    if vec.ndim != 1 or vec.shape[0] != matrix.cols:
        raise DimensionMismatchError(
            f"vector of length {vec.shape[0] if vec.ndim else 0} does not match {matrix.cols} columns"
        )
    if matrix.rows == 0:
        return zeros(0)
    product = matrix.csr @ (vec.astype(np.int64) & 1)
    return (np.asarray(product).ravel() & 1).astype(np.uint8)


def mat_mul(left: SparseBitMatrix, right: SparseBitMatrix) -> SparseBitMatrix:
    if left.cols != right.rows:
        raise DimensionMismatchError(f"cannot multiply {left.shape} by {right.shape}")
    product = (left.csr @ right.csr).tocsr()
    product.data = product.data & 1
    product.eliminate_zeros()
    product.sort_indices()
    supports = [
        product.indices[product.indptr[r] : product.indptr[r + 1]].tolist() for r in range(left.rows)
    ]
    return SparseBitMatrix(left.rows, right.cols, supports)


def _eliminate(dense: np.ndarray, scan_cols: Optional[int] = None) -> Tuple[np.ndarray, List[int]]:
    """Gauss-Jordan elimination on bit-packed rows.

    Columns are scanned left to right; the pivot for a column is the first
    non-eliminated row holding a one there. Returns the packed reduced matrix
    and the pivot columns.
    """
    rows, cols = dense.shape
    if scan_cols is None:
        scan_cols = cols
    packed = np.packbits(dense.astype(np.uint8) & 1, axis=1)
    pivots: List[int] = []
    r = 0
    for c in range(scan_cols):
        if r == rows:
            break
        byte, shift = c >> 3, 7 - (c & 7)
        column = (packed[:, byte] >> shift) & 1
        candidates = np.flatnonzero(column[r:])
        if candidates.size == 0:
            continue
        p = r + int(candidates[0])
        if p != r:
            packed[[r, p]] = packed[[p, r]]
            column[[r, p]] = column[[p, r]]
        column[r] = 0
        hits = np.flatnonzero(column)
        if hits.size:
            packed[hits] ^= packed[r]
        pivots.append(c)
        r += 1
    return packed, pivots


def _unpack(packed: np.ndarray, cols: int) -> np.ndarray:
    if packed.shape[0] == 0 or cols == 0:
        return np.zeros((packed.shape[0], cols), dtype=np.uint8)
    return np.unpackbits(packed, axis=1, count=cols)


def rref(matrix: SparseBitMatrix) -> RrefResult:
    packed, pivots = _eliminate(matrix.to_dense())
    reduced = SparseBitMatrix.from_dense(_unpack(packed, matrix.cols))
    return RrefResult(rref=reduced, pivot_cols=tuple(pivots))


def rank(matrix: SparseBitMatrix) -> int:
    if matrix.rows == 0 or matrix.cols == 0:
        return 0
    _, pivots = _eliminate(matrix.to_dense())
    return len(pivots)


def pivot_columns(dense: np.ndarray) -> List[int]:
    """Pivot columns of a dense 0/1 array, used for column-ordered basis selection."""
    if dense.shape[0] == 0:
        return []
    _, pivots = _eliminate(dense)
    return pivots


def solve(matrix: SparseBitMatrix, rhs: BitVec) -> Optional[BitVec]:
    """Return one solution of ``matrix @ x = rhs`` with free variables set to 0, or None."""
    rhs = np.asarray(rhs)
    if rhs.ndim != 1 or rhs.shape[0] != matrix.rows:
        raise DimensionMismatchError(
            f"right-hand side of length {rhs.shape[0] if rhs.ndim else 0} does not match {matrix.rows} rows"
        )
    cols = matrix.cols
    solution = zeros(cols)
    if matrix.rows == 0:
        return solution
    augmented = np.empty((matrix.rows, cols + 1), dtype=np.uint8)
    augmented[:, :cols] = matrix.to_dense()
    augmented[:, cols] = rhs.astype(np.uint8) & 1
    packed, pivots = _eliminate(augmented)
    if pivots and pivots[-1] == cols:
        return None
    reduced = _unpack(packed, cols + 1)
    for i, p in enumerate(pivots):
        solution[p] = reduced[i, cols]
    return solution


def in_row_space(matrix: SparseBitMatrix, vec: BitVec) -> bool:
    vec = np.asarray(vec)
    if vec.ndim != 1 or vec.shape[0] != matrix.cols:
        raise DimensionMismatchError(
            f"vector of length {vec.shape[0] if vec.ndim else 0} does not match {matrix.cols} columns"
        )
    if not vec.any():
        return True
    return solve(matrix.transpose(), vec) is not None


def kernel_dimension(matrix: SparseBitMatrix) -> int:
    return matrix.cols - rank(matrix)


class RowSpaceOracle:
    """Row-space membership against a precomputed reduced row echelon form.

    In reduced form the pivot columns are unit vectors, so ``vec`` lies in the
    row space iff it equals the combination of reduced rows selected by its
    own pivot-column bits.
    """

    def __init__(self, matrix: SparseBitMatrix) -> None:
        self.matrix = matrix
        reduced = rref(matrix)
        self._pivots = np.asarray(reduced.pivot_cols, dtype=np.int64)
        basis = reduced.rref.submatrix(range(reduced.rank), range(matrix.cols))
        self._basis_t = basis.transpose()

    def contains(self, vec: BitVec) -> bool:
        vec = np.asarray(vec).astype(np.uint8) & 1
        if vec.shape != (self.matrix.cols,):
            raise DimensionMismatchError(
                f"vector of length {vec.size} does not match {self.matrix.cols} columns"
            )
        if self._pivots.size == 0:
            return not vec.any()
        combination = mat_vec(self._basis_t, vec[self._pivots])
        return bool(np.array_equal(combination, vec))
