from __future__ import annotations

from typing import Callable, List

import numpy as np
import pytest

from app.core.gf2 import SparseBitMatrix
from app.services.codes import TOY_GB, CssCode, gb_construct, steane_code

STEANE_DENSE = [
    [1, 0, 1, 0, 1, 0, 1],
    [0, 1, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
]


@pytest.fixture
def steane() -> CssCode:
    return steane_code()


@pytest.fixture
def steane_h() -> SparseBitMatrix:
    return SparseBitMatrix.from_dense(STEANE_DENSE)


@pytest.fixture
def toy_gb() -> CssCode:
    return gb_construct(TOY_GB, name="toy-gb")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20220601)


@pytest.fixture
def random_matrix(rng: np.random.Generator) -> Callable[..., SparseBitMatrix]:
    def build(rows: int, cols: int, density: float = 0.3) -> SparseBitMatrix:
        return SparseBitMatrix.from_dense((rng.random((rows, cols)) < density).astype(np.uint8))

    return build


def random_tree(rng: np.random.Generator, n_bits: int) -> SparseBitMatrix:
    """Parity-check matrix whose Tanner graph is a tree over ``n_bits`` bits."""
    rows: List[List[int]] = []
    bits = 1
    while bits < n_bits:
        anchor = int(rng.integers(bits))
        new = min(int(rng.integers(1, 3)), n_bits - bits)
        rows.append([anchor] + list(range(bits, bits + new)))
        bits += new
    return SparseBitMatrix(len(rows), n_bits, rows)
