from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import DecoderSimError, DimensionMismatchError
from app.core.gf2 import SparseBitMatrix, as_bitvec, mat_vec, rank
from app.services.osd_postprocess import Osd0Decoder, osd0_decode

PATH = SparseBitMatrix.from_dense([[1, 1, 0], [0, 1, 1]])


def test_full_rank_square():
    estimate = osd0_decode(SparseBitMatrix.identity(2), as_bitvec([1, 0]), as_bitvec([0, 1]), np.array([3.0, 0.5]))
    assert estimate.tolist() == [1, 0]


def test_path_selection_and_estimate():
    decoder = Osd0Decoder(PATH)
    selection = decoder.select(np.array([0.1, 5.0, 5.0]))
    assert selection.ordered_cols == (0, 1, 2)
    assert selection.basis_cols == (0, 1)
    assert selection.complement_cols == (2,)
    estimate = decoder.decode(as_bitvec([1, 0]), as_bitvec([0, 0, 0]), np.array([0.1, 5.0, 5.0]))
    assert estimate.tolist() == [1, 0, 0]


def test_ties_keep_column_order():
    selection = Osd0Decoder(PATH).select(np.full(3, 2.0))
    assert selection.ordered_cols == (0, 1, 2)


def test_valid_hard_decision_stays_valid():
    syndrome = as_bitvec([1, 1])
    estimate = osd0_decode(PATH, syndrome, as_bitvec([0, 1, 0]), np.array([4.0, -0.2, 3.0]))
    assert np.array_equal(mat_vec(PATH, estimate), syndrome)


def test_stalled_steane_decode_is_repaired(steane_h):
    soft = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    decoder = Osd0Decoder(steane_h)
    assert decoder.select(soft).basis_cols == (0, 2, 4)
    estimate = decoder.decode(as_bitvec([1, 1, 1]), np.zeros(7, dtype=np.uint8), soft)
    assert estimate.tolist() == [1, 0, 1, 0, 1, 0, 0]


def test_random_instances_are_syndrome_valid(rng, random_matrix):
    for _ in range(100):
        hz = random_matrix(8, 16, 0.25)
        hz_rank = rank(hz)
        decoder = Osd0Decoder(hz)
        for _ in range(100):
            error = as_bitvec(rng.random(16) < 0.2)
            syndrome = mat_vec(hz, error)
            mp_hard = as_bitvec(rng.integers(0, 2, 16))
            soft = rng.normal(0.0, 2.0, 16)
            estimate = decoder.decode(syndrome, mp_hard, soft)
            selection = decoder.select(soft)
            complement = list(selection.complement_cols)
            assert np.array_equal(mat_vec(hz, estimate), syndrome)
            assert np.array_equal(estimate[complement], mp_hard[complement])
            assert len(selection.basis_cols) == hz_rank


def test_syndrome_outside_column_space():
    hz = SparseBitMatrix.from_dense([[1, 1], [1, 1]])
    with pytest.raises(DecoderSimError):
        osd0_decode(hz, as_bitvec([1, 0]), as_bitvec([0, 0]), np.ones(2))


def test_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        osd0_decode(PATH, as_bitvec([1, 0, 0]), as_bitvec([0, 0, 0]), np.ones(3))
    with pytest.raises(DimensionMismatchError):
        Osd0Decoder(PATH).select(np.ones(2))
