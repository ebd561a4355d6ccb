from __future__ import annotations

import json

import numpy as np
import pytest

from app.core.errors import AlistFormatError, CodeValidationError, ConfigError
from app.core.gf2 import SparseBitMatrix, kernel_dimension, mat_mul, rank
from app.schemas.decoding import CirculantSpec
from app.services.codes import (
    available_codes,
    code_report,
    gb_construct,
    has_four_cycles,
    load_alist,
    load_code,
    new_css,
    write_alist,
    write_alist_file,
)

TWO_BY_THREE = [[1, 1, 0], [0, 1, 1]]
TWO_BY_THREE_ALIST = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n"
ONE_BY_ONE_ALIST = "1 1\n1 1\n1\n1\n1\n1\n"


def test_load_alist_one_by_one():
    matrix = load_alist(ONE_BY_ONE_ALIST)
    assert matrix.shape == (1, 1)
    assert matrix.row_supports == ((0,),)


def test_load_alist_two_by_three():
    assert load_alist(TWO_BY_THREE_ALIST).row_supports == ((0, 1), (1, 2))


def test_write_alist_exact_text():
    assert write_alist(SparseBitMatrix.from_dense(TWO_BY_THREE)) == TWO_BY_THREE_ALIST
    assert write_alist(SparseBitMatrix.identity(1)) == ONE_BY_ONE_ALIST


def test_alist_round_trip_random(random_matrix):
    matrix = random_matrix(10, 20, 0.2)
    assert load_alist(write_alist(matrix)) == matrix


def test_alist_with_zero_padding():
    padded = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 3\n"
    assert load_alist(padded) == SparseBitMatrix.from_dense(TWO_BY_THREE)


def test_alist_without_row_section():
    columns_only = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n"
    assert load_alist(columns_only) == SparseBitMatrix.from_dense(TWO_BY_THREE)


def test_alist_empty_column_round_trips():
    matrix = SparseBitMatrix.from_dense([[1, 0, 1], [1, 0, 0]])
    text = write_alist(matrix)
    assert "\n0\n" in text
    assert load_alist(text) == matrix


@pytest.mark.parametrize("shape", [(0, 3), (3, 0), (0, 0)])
def test_alist_empty_dimensions_round_trip(shape):
    matrix = SparseBitMatrix.zeros(*shape)
    assert load_alist(write_alist(matrix)) == matrix


@pytest.mark.parametrize(
    "text",
    [
        "3\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n",
        "3 2\n2 2\n1 2 1\n2 2\n1\n1 3\n2\n1 2\n2 3\n",
        "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n1 3\n",
        "3 2\n2 2\n1 1 1\n2 2\n1\n1\n2\n1 2\n2 3\n",
        "3 2\n2 2\n1 2 x\n2 2\n1\n1 2\n2\n1 2\n2 3\n",
    ],
)
def test_alist_rejects_malformed(text):
    with pytest.raises(AlistFormatError):
        load_alist(text)


def test_new_css_steane(steane):
    assert steane.n == 7
    assert steane.k == 1
    assert steane.rank_hx == steane.rank_hz == 3


def test_new_css_rejects_non_orthogonal():
    with pytest.raises(CodeValidationError):
        new_css(SparseBitMatrix.from_dense([[1, 1, 0]]), SparseBitMatrix.from_dense([[1, 0, 1]]))


def test_new_css_rejects_column_mismatch():
    with pytest.raises(CodeValidationError):
        new_css(SparseBitMatrix.from_dense([[1, 1, 0]]), SparseBitMatrix.from_dense([[1, 1]]))


def test_new_css_disjoint_supports():
    code = new_css(SparseBitMatrix.from_dense([[1, 1, 0, 0]]), SparseBitMatrix.from_dense([[0, 0, 1, 1]]))
    assert (code.n, code.k) == (4, 2)


def test_gb_construct_trivial():
    code = gb_construct(CirculantSpec(size=1, a_support=(0,), b_support=(0,)))
    assert code.hx.to_dense().tolist() == [[1, 1]]
    assert code.hz.to_dense().tolist() == [[1, 1]]
    assert (code.n, code.k) == (2, 0)


def test_gb_construct_cyclic_rows():
    code = gb_construct(CirculantSpec(size=3, a_support=(0, 1), b_support=(0, 2)))
    assert code.hx.to_dense().tolist() == [
        [1, 1, 0, 1, 0, 1],
        [0, 1, 1, 1, 1, 0],
        [1, 0, 1, 0, 1, 1],
    ]
    assert mat_mul(code.hx, code.hz.transpose()).nnz == 0


def test_toy_gb_parameters(toy_gb):
    assert (toy_gb.n, toy_gb.k) == (14, 6)
    assert toy_gb.m_x == toy_gb.m_z == 7


def test_gb_construct_orthogonal_for_random_polynomials(rng):
    for _ in range(200):
        size = int(rng.integers(2, 16))
        a = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
        b = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
        spec = CirculantSpec(size=size, a_support=tuple(int(x) for x in a), b_support=tuple(int(x) for x in b))
        code = gb_construct(spec)
        assert mat_mul(code.hx, code.hz.transpose()).nnz == 0
        assert code.k >= 0


def test_circulant_spec_validation():
    with pytest.raises(ValueError):
        CirculantSpec(size=3, a_support=(0, 3), b_support=(0,))
    with pytest.raises(ValueError):
        CirculantSpec(size=3, a_support=(), b_support=(0,))


def test_code_report_steane(steane):
    report = code_report(steane)
    assert report["n"] == 7
    assert report["k"] == 1
    assert report["hx_row_weights"] == {4: 3}
    assert report["hz_row_weights"] == {4: 3}
    assert report["hx_four_cycles"] is True


def test_four_cycles_absent_on_a_path():
    assert not has_four_cycles(SparseBitMatrix.from_dense(TWO_BY_THREE))


def test_swapped_exchanges_roles(toy_gb):
    swapped = toy_gb.swapped()
    assert swapped.hx == toy_gb.hz
    assert swapped.hz == toy_gb.hx
    assert swapped.k == toy_gb.k


def test_load_builtin_codes():
    assert load_code("steane").k == 1
    assert load_code("toy-gb").n == 14


def test_load_code_from_manifests(tmp_path, steane):
    write_alist_file(steane.hx, tmp_path / "hx.alist")
    write_alist_file(steane.hz, tmp_path / "hz.alist")
    (tmp_path / "mine.json").write_text(json.dumps({"name": "mine", "hx_path": "hx.alist", "hz_path": "hz.alist"}))
    (tmp_path / "family.json").write_text(
        json.dumps(
            {
                "codes": [
                    {"name": "gb7", "gb": {"size": 7, "a_support": [0, 1, 3], "b_support": [0, 2, 3, 4]}},
                    {"name": "gb3", "gb": {"size": 3, "a_support": [0, 1], "b_support": [0, 2]}},
                ]
            }
        )
    )

    mine = load_code("mine", codes_dir=tmp_path)
    assert (mine.name, mine.n, mine.k) == ("mine", 7, 1)
    gb7 = load_code(f"{tmp_path / 'family.json'}:gb7", codes_dir=tmp_path)
    assert (gb7.n, gb7.k) == (14, 6)
    with pytest.raises(ConfigError):
        load_code("family", codes_dir=tmp_path)
    with pytest.raises(ConfigError):
        load_code("family:nothing", codes_dir=tmp_path)
    with pytest.raises(ConfigError):
        load_code("absent", codes_dir=tmp_path)
    assert "mine" in available_codes(tmp_path)


def _all_vectors(n: int) -> np.ndarray:
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(np.int64)


def _dimension_by_enumeration(code) -> int:
    # |ker H_Z| and |rowspace H_X| are counted directly, so no rank routine is involved.
    vectors = _all_vectors(code.n)
    kernel_size = int(np.count_nonzero(~((vectors @ code.hz.to_dense().T.astype(np.int64)) % 2).any(axis=1)))
    combos = _all_vectors(code.m_x) @ code.hx.to_dense().astype(np.int64) % 2
    stabilizers = len({row.tobytes() for row in combos.astype(np.uint8)})
    return int(np.log2(kernel_size // stabilizers))


@pytest.mark.parametrize("name", ["steane", "toy_gb"])
def test_k_matches_logical_count_by_enumeration(name, request):
    code = request.getfixturevalue(name)
    assert code.k == _dimension_by_enumeration(code)
    assert code.k == kernel_dimension(code.hz) - rank(code.hx)


def test_k_matches_enumeration_on_small_gb_codes(rng):
    for _ in range(20):
        size = int(rng.integers(2, 7))
        a = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
        b = rng.choice(size, size=int(rng.integers(1, size + 1)), replace=False)
        code = gb_construct(
            CirculantSpec(size=size, a_support=tuple(int(x) for x in a), b_support=tuple(int(x) for x in b))
        )
        assert code.k == _dimension_by_enumeration(code)


def test_toy_gb_row_weights(toy_gb):
    assert np.all(np.asarray(toy_gb.hx.row_weights()) == 7)
