from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import AlistFormatError, CodeValidationError, ConfigError, DimensionMismatchError
from app.core.gf2 import SparseBitMatrix, mat_mul, rank
from app.schemas.decoding import CirculantSpec

logger = logging.getLogger(__name__)

STEANE_ROWS = (
    (0, 2, 4, 6),
    (1, 2, 5, 6),
    (3, 4, 5, 6),
)

# a(x) = 1 + x + x^3 divides x^7 - 1 and b(x) = a(x)(1 + x), so k = 2 * deg gcd = 6.
TOY_GB = CirculantSpec(size=7, a_support=(0, 1, 3), b_support=(0, 2, 3, 4))


@dataclass(frozen=True)
class CssCode:
    hx: SparseBitMatrix
    hz: SparseBitMatrix
    name: str
    rank_hx: int
    rank_hz: int
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.hx.cols

    @property
    def k(self) -> int:
        return self.n - self.rank_hx - self.rank_hz

    @property
    def m_x(self) -> int:
        return self.hx.rows

    @property
    def m_z(self) -> int:
        return self.hz.rows

    def swapped(self) -> "CssCode":
        """The same code with the roles of X and Z exchanged, used to decode Z errors."""
        return CssCode(
            hx=self.hz,
            hz=self.hx,
            name=self.name,
            rank_hx=self.rank_hz,
            rank_hz=self.rank_hx,
            metadata=self.metadata,
        )


def _parse_ints(line: str, lineno: int) -> List[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError as exc:
        raise AlistFormatError(f"line {lineno}: non-integer token") from exc


def load_alist(text: str) -> SparseBitMatrix:
    lines = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip()]
    if len(lines) < 2:
        raise AlistFormatError("alist needs the size and maximum degree lines")

    header = _parse_ints(lines[0][1], lines[0][0])
    if len(header) != 2 or min(header) < 0:
        raise AlistFormatError("first line must hold the column and row counts")
    n_cols, n_rows = header
    max_degrees = _parse_ints(lines[1][1], lines[1][0])
    if len(max_degrees) != 2 or min(max_degrees) < 0:
        raise AlistFormatError("second line must hold the maximum column and row degrees")
    # A matrix without columns (rows) has an empty degree line, which is skipped above.
    cursor = 2

    def read_degrees(count: int, label: str) -> List[int]:
        nonlocal cursor
        if count == 0:
            return []
        if cursor >= len(lines):
            raise AlistFormatError(f"missing the {label} degree line")
        lineno, line = lines[cursor]
        cursor += 1
        degrees = _parse_ints(line, lineno)
        if len(degrees) != count:
            raise AlistFormatError(f"expected {count} {label} degrees, got {len(degrees)}")
        return degrees

    col_degrees = read_degrees(n_cols, "column")
    row_degrees = read_degrees(n_rows, "row")
    if any(d < 0 or d > max_degrees[0] for d in col_degrees):
        raise AlistFormatError("column degree outside [0, max column degree]")
    if any(d < 0 or d > max_degrees[1] for d in row_degrees):
        raise AlistFormatError("row degree outside [0, max row degree]")
    if sum(col_degrees) != sum(row_degrees):
        raise AlistFormatError("column and row degree totals differ")

    body = lines[cursor:]
    if len(body) not in (n_cols, n_cols + n_rows):
        raise AlistFormatError(
            f"expected {n_cols + n_rows} index lines, found {len(body)}"
        )

    def read_section(offset: int, count: int, degrees: Sequence[int], bound: int, label: str) -> List[List[int]]:
        section = []
        for j in range(count):
            lineno, line = body[offset + j]
            entries = [v for v in _parse_ints(line, lineno) if v != 0]
            if any(v < 0 or v > bound for v in entries):
                raise AlistFormatError(f"line {lineno}: {label} index out of range 1..{bound}")
            if len(entries) != degrees[j]:
                raise AlistFormatError(
                    f"line {lineno}: {label} list has {len(entries)} entries, degree says {degrees[j]}"
                )
            if len(set(entries)) != len(entries):
                raise AlistFormatError(f"line {lineno}: repeated {label} index")
            section.append([v - 1 for v in entries])
        return section

    col_lists = read_section(0, n_cols, col_degrees, n_rows, "row")
    row_supports: List[List[int]] = [[] for _ in range(n_rows)]
    for c, rows in enumerate(col_lists):
        for r in rows:
            row_supports[r].append(c)

    if len(body) == n_cols + n_rows:
        row_lists = read_section(n_cols, n_rows, row_degrees, n_cols, "column")
        for r, cols in enumerate(row_lists):
            if sorted(cols) != sorted(row_supports[r]):
                raise AlistFormatError(f"row {r + 1} is inconsistent with the column section")
    else:
        logger.warning("alist has no row section; matrix rebuilt from the column section only")
        for r, cols in enumerate(row_supports):
            if len(cols) != row_degrees[r]:
                raise AlistFormatError(f"row {r + 1} degree does not match the column section")

    return SparseBitMatrix(n_rows, n_cols, row_supports)


def write_alist(matrix: SparseBitMatrix) -> str:
    """Canonical alist text; an empty index list is written as a single 0."""
    col_weights = matrix.col_weights()
    row_weights = matrix.row_weights()

    def index_line(indices: Sequence[int]) -> str:
        if not indices:
            return "0"
        return " ".join(str(i + 1) for i in indices)

    out = [
        f"{matrix.cols} {matrix.rows}",
        f"{max(col_weights, default=0)} {max(row_weights, default=0)}",
        " ".join(str(w) for w in col_weights),
        " ".join(str(w) for w in row_weights),
    ]
    out.extend(index_line(col) for col in matrix.col_supports)
    out.extend(index_line(row) for row in matrix.row_supports)
    return "\n".join(out) + "\n"


def read_alist_file(path: Path) -> SparseBitMatrix:
    return load_alist(Path(path).read_text())


def write_alist_file(matrix: SparseBitMatrix, path: Path) -> None:
    Path(path).write_text(write_alist(matrix))


def new_css(
    hx: SparseBitMatrix,
    hz: SparseBitMatrix,
    name: str = "css",
    metadata: Optional[Dict[str, Any]] = None,
) -> CssCode:
    if hx.cols != hz.cols:
        raise CodeValidationError(f"H_X has {hx.cols} columns but H_Z has {hz.cols}")
    product = mat_mul(hx, hz.transpose())
    for r, row in enumerate(product.row_supports):
        if row:
            raise CodeValidationError(
                f"H_X row {r} and H_Z row {row[0]} overlap on an odd number of qubits"
            )
    code = CssCode(
        hx=hx,
        hz=hz,
        name=name,
        rank_hx=rank(hx),
        rank_hz=rank(hz),
        metadata=dict(metadata or {}),
    )
    if code.k < 0:
        raise CodeValidationError(f"negative logical qubit count k={code.k}")
    return code


def circulant(size: int, offsets: Sequence[int]) -> SparseBitMatrix:
    """Entry (i, j) is 1 iff (j - i) mod size is one of the offsets."""
    return SparseBitMatrix(size, size, [[(i + o) % size for o in offsets] for i in range(size)])


def gb_construct(spec: CirculantSpec, name: Optional[str] = None) -> CssCode:
    a = circulant(spec.size, spec.a_support)
    b = circulant(spec.size, spec.b_support)
    hx = a.hstack(b)
    hz = b.transpose().hstack(a.transpose())
    code = new_css(hx, hz, name="gb", metadata={"gb": spec.model_dump()})
    label = name or f"GB[{code.n},{code.k}]"
    return CssCode(
        hx=code.hx,
        hz=code.hz,
        name=label,
        rank_hx=code.rank_hx,
        rank_hz=code.rank_hz,
        metadata=code.metadata,
    )


def steane_code() -> CssCode:
    h = SparseBitMatrix(3, 7, STEANE_ROWS)
    return new_css(h, h, name="steane")


def has_four_cycles(matrix: SparseBitMatrix) -> bool:
    if matrix.rows < 2:
        return False
    overlap = (matrix.csr @ matrix.csr.T).tocoo()
    off_diagonal = overlap.row != overlap.col
    return bool(np.any(overlap.data[off_diagonal] >= 2))


def _distribution(weights: Sequence[int]) -> Dict[int, int]:
    return dict(sorted(Counter(weights).items()))


def code_report(code: CssCode) -> Dict[str, Any]:
    return {
        "name": code.name,
        "n": code.n,
        "k": code.k,
        "m_x": code.m_x,
        "m_z": code.m_z,
        "rank_hx": code.rank_hx,
        "rank_hz": code.rank_hz,
        "hx_row_weights": _distribution(code.hx.row_weights()),
        "hx_col_weights": _distribution(code.hx.col_weights()),
        "hz_row_weights": _distribution(code.hz.row_weights()),
        "hz_col_weights": _distribution(code.hz.col_weights()),
        "hx_four_cycles": has_four_cycles(code.hx),
        "hz_four_cycles": has_four_cycles(code.hz),
        "metadata": code.metadata,
    }


BUILTIN_CODES = {
    "steane": steane_code,
    "toy-gb": lambda: gb_construct(TOY_GB, name="toy-gb"),
}


def code_from_manifest_entry(entry: Dict[str, Any], base_dir: Path) -> CssCode:
    name = entry.get("name")
    if not name:
        raise ConfigError("manifest entry needs a name")
    metadata = {k: v for k, v in entry.items() if k not in ("name", "hx_path", "hz_path", "gb")}
    if "gb" in entry:
        try:
            spec = CirculantSpec(**entry["gb"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid circulant spec for {name}: {exc}") from exc
        code = gb_construct(spec, name=name)
        return CssCode(code.hx, code.hz, name, code.rank_hx, code.rank_hz, {**code.metadata, **metadata})
    if "hx_path" not in entry or "hz_path" not in entry:
        raise ConfigError(f"manifest entry {name} needs hx_path and hz_path, or gb")
    hx = read_alist_file(base_dir / entry["hx_path"])
    hz = read_alist_file(base_dir / entry["hz_path"])
    return new_css(hx, hz, name=name, metadata=metadata)


def _manifest_entries(path: Path) -> List[Dict[str, Any]]:
    data = json.loads(path.read_text())
    if isinstance(data, dict) and isinstance(data.get("codes"), list):
        return data["codes"]
    if isinstance(data, list):
        return data
    if isinstance(data, dict):
        return [data]
    raise ConfigError(f"unrecognized manifest layout in {path}")


def load_code(reference: str, codes_dir: Optional[Path] = None) -> CssCode:
    """Resolve a code reference.

    Accepted forms: a builtin name (``steane``, ``toy-gb``), a manifest path,
    ``<manifest path>:<entry name>``, or a bare name looked up as
    ``<codes_dir>/<name>.json``.
    """
    if reference in BUILTIN_CODES:
        return BUILTIN_CODES[reference]()

    codes_dir = Path(codes_dir) if codes_dir is not None else settings.codes_path()
    path_part, _, entry_name = reference.partition(":")
    candidates = [Path(path_part), codes_dir / path_part, codes_dir / f"{path_part}.json"]
    manifest = next((c for c in candidates if c.is_file()), None)
    if manifest is None:
        raise ConfigError(f"unknown code reference {reference!r}")

    entries = _manifest_entries(manifest)
    if entry_name:
        entries = [e for e in entries if e.get("name") == entry_name]
        if not entries:
            raise ConfigError(f"no entry named {entry_name!r} in {manifest}")
    elif len(entries) > 1:
        raise ConfigError(f"{manifest} holds several codes; use {manifest}:<name>")

    code = code_from_manifest_entry(entries[0], manifest.parent)
    logger.info("loaded code %s: n=%d k=%d m_x=%d m_z=%d", code.name, code.n, code.k, code.m_x, code.m_z)
    return code


def available_codes(codes_dir: Optional[Path] = None) -> List[str]:
    codes_dir = Path(codes_dir) if codes_dir is not None else settings.codes_path()
    names = list(BUILTIN_CODES)
    if codes_dir.is_dir():
        names.extend(sorted(p.stem for p in codes_dir.glob("*.json")))
    return names


def check_lengths(code: CssCode, *vectors: np.ndarray) -> None:
    for vec in vectors:
        if np.asarray(vec).shape != (code.n,):
            raise DimensionMismatchError(f"expected a vector of length {code.n}")
