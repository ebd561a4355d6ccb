from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import DimensionMismatchError
from app.core.gf2 import SparseBitMatrix, as_bitvec, mat_vec, solve
from app.schemas.decoding import DecoderConfig, SiConfig
from app.services import si_postprocess
from app.services.mp_decoder import decode, hard_decision
from app.services.si_postprocess import (
    MP_NONCONVERGENCE,
    StabilizerInactivationDecoder,
    check_reliabilities,
    check_reliability,
    delta_metric,
    delta_metric_signed,
    rank_of_check,
    reliability_order,
    restrict,
    si_decode,
)
from app.services.simulation import is_success

MS_SERIAL = DecoderConfig(algorithm="ms", schedule="serial", max_iters=20)


def test_check_reliability_examples(steane_h):
    soft = np.array([1.0, -2.0, 3.0, -4.0, 5.0, -6.0, 7.0])
    assert check_reliability(0, soft, steane_h) == 16.0
    assert check_reliability(2, np.zeros(7), steane_h) == 0.0
    assert check_reliabilities(soft, steane_h).tolist() == [16.0, 18.0, 22.0]
    with pytest.raises(IndexError):
        check_reliability(3, soft, steane_h)


def test_rank_of_check_examples():
    assert rank_of_check(0, [3.0, 1.0, 2.0]) == 2
    assert rank_of_check(1, [3.0, 1.0, 2.0]) == 0
    assert all(rank_of_check(r, [2.0, 2.0, 2.0]) == 0 for r in range(3))


def test_reliability_order_breaks_ties_by_row():
    assert reliability_order([2.0, 1.0, 2.0, 1.0]).tolist() == [1, 3, 0, 2]


def test_delta_metric_is_zero_without_a_stabilizer():
    soft = np.array([0.5, -1.0, 2.0])
    e = as_bitvec([1, 0, 1])
    assert delta_metric(e, as_bitvec([0, 0, 0]), hard_decision(soft), soft) == 0.0


def test_delta_metric_bounded_by_check_reliability(rng, steane_h):
    for _ in range(10_000):
        soft = rng.normal(0.0, 3.0, 7)
        e = as_bitvec(rng.integers(0, 2, 7))
        row = int(rng.integers(3))
        r_x = steane_h.row_vector(row)
        delta = delta_metric(e, r_x, hard_decision(soft), soft)
        assert abs(delta) <= check_reliability(row, soft, steane_h) + 1e-12
        assert delta == pytest.approx(delta_metric_signed(e, r_x, soft))


def test_restrict_on_all_columns(steane_h):
    restriction = restrict(steane_h, range(7))
    assert restriction.h_out.rows == 0
    assert restriction.h_in == steane_h
    assert restriction.out_cols == ()


def test_restrict_on_a_steane_check(steane_h):
    restriction = restrict(steane_h, steane_h.row_supports[0])
    assert restriction.in_rows == (0, 1, 2)
    assert restriction.out_rows == ()
    assert restriction.out_cols == (1, 3, 5)
    assert restriction.a.shape == (3, 3)
    assert restriction.h_in.to_dense().tolist() == [[1, 1, 1, 1], [0, 1, 0, 1], [0, 0, 1, 1]]
    assert restriction.in_rows_even()


def test_restrict_direct_split():
    hz = SparseBitMatrix.from_dense([[1, 1, 0, 0], [0, 0, 1, 1]])
    restriction = restrict(hz, [0, 1])
    assert restriction.in_rows == (0,)
    assert restriction.out_rows == (1,)
    assert restriction.h_out.to_dense().tolist() == [[1, 1]]
    assert restriction.a.to_dense().tolist() == [[0, 0]]


def test_restrict_keeps_the_zero_block(rng, random_matrix):
    for _ in range(100):
        hz = random_matrix(10, 20, 0.2)
        support = rng.choice(20, size=int(rng.integers(1, 8)), replace=False)
        restriction = restrict(hz, support)
        assert hz.submatrix(restriction.out_rows, restriction.in_cols).nnz == 0
        e_in = as_bitvec(rng.integers(0, 2, len(restriction.in_cols)))
        e_out = as_bitvec(rng.integers(0, 2, len(restriction.out_cols)))
        full = restriction.assemble(e_in, e_out)
        s = mat_vec(hz, full)
        assert np.array_equal(s[list(restriction.out_rows)], mat_vec(restriction.h_out, e_out))
        lhs = mat_vec(restriction.h_in, e_in) ^ mat_vec(restriction.a, e_out)
        assert np.array_equal(s[list(restriction.in_rows)], lhs)


def test_split_error_solutions_are_degenerate(steane):
    error = as_bitvec([1, 0, 1, 0, 0, 0, 0])
    syndrome = mat_vec(steane.hz, error)
    restriction = restrict(steane.hz, steane.hx.row_supports[0])
    e_in = solve(restriction.h_in, syndrome[list(restriction.in_rows)])
    estimate = restriction.assemble(e_in, np.zeros(len(restriction.out_cols), dtype=np.uint8))
    assert np.array_equal(mat_vec(steane.hz, estimate), syndrome)
    assert is_success(steane, error, estimate)


def test_converged_mp_skips_inactivation(steane):
    outcome = si_decode(steane, as_bitvec([0, 0, 0]), np.ones(7), MS_SERIAL, SiConfig())
    assert outcome.success
    assert outcome.inactivations_used == 0
    assert not outcome.post_invoked
    assert not outcome.estimate.any()


def test_converged_mp_matches_plain_decoding(rng, toy_gb):
    for _ in range(30):
        error = (rng.random(toy_gb.n) < 0.05).astype(np.uint8)
        syndrome = mat_vec(toy_gb.hz, error)
        plain = decode(toy_gb.hz, syndrome, np.ones(toy_gb.n), MS_SERIAL)
        outcome = si_decode(toy_gb, syndrome, np.ones(toy_gb.n), MS_SERIAL, SiConfig())
        if plain.converged:
            assert outcome.inactivations_used == 0
            assert np.array_equal(outcome.estimate, plain.hard)


@pytest.mark.parametrize(
    "bit, expected",
    [(6, [1, 0, 1, 0, 1, 0, 0]), (0, [1, 0, 0, 0, 0, 0, 0])],
)
def test_inactivation_rescues_a_stalled_serial_decoder(steane, bit, expected):
    error = np.zeros(7, dtype=np.uint8)
    error[bit] = 1
    syndrome = mat_vec(steane.hz, error)
    outcome = StabilizerInactivationDecoder(steane, MS_SERIAL, SiConfig()).decode(syndrome, np.ones(7))
    assert outcome.post_invoked
    assert outcome.success
    assert outcome.inactivations_used == 1
    assert outcome.inactivated_rows == (0,)
    assert outcome.estimate.tolist() == expected
    assert is_success(steane, error, outcome.estimate)


def test_reliabilities_are_computed_once(monkeypatch, steane):
    calls = []
    original = si_postprocess.check_reliabilities

    def counting(soft, hx):
        calls.append(1)
        return original(soft, hx)

    monkeypatch.setattr(si_postprocess, "check_reliabilities", counting)
    monkeypatch.setattr(StabilizerInactivationDecoder, "_decode_outside", lambda self, *args: (None, 0))
    syndrome = mat_vec(steane.hz, as_bitvec([0, 0, 0, 0, 0, 0, 1]))
    outcome = StabilizerInactivationDecoder(steane, MS_SERIAL, SiConfig(lambda_max="all")).decode(syndrome, np.ones(7))
    assert not outcome.success
    assert outcome.estimate is None
    assert outcome.inactivations_used == 3
    assert outcome.failure_breakdown[MP_NONCONVERGENCE] == 3
    assert outcome.inactivated_rows == (0, 1, 2)
    assert len(calls) == 1


@pytest.mark.parametrize("mode", ["restrict", "zero_llr"])
@pytest.mark.parametrize("schedule", ["serial", "flooding", "layered"])
def test_successful_outputs_satisfy_the_syndrome(rng, toy_gb, mode, schedule):
    layers = tuple((r,) for r in range(toy_gb.m_z)) if schedule == "layered" else None
    config = DecoderConfig(algorithm="ms", schedule=schedule, layers=layers, max_iters=15)
    decoder = StabilizerInactivationDecoder(toy_gb, config, SiConfig(lambda_max="all", mode=mode))
    for _ in range(1700):
        error = (rng.random(toy_gb.n) < 0.12).astype(np.uint8)
        syndrome = mat_vec(toy_gb.hz, error)
        outcome = decoder.decode(syndrome, np.ones(toy_gb.n))
        if outcome.success:
            assert np.array_equal(mat_vec(toy_gb.hz, outcome.estimate), syndrome)
            assert 0 <= outcome.inactivations_used <= toy_gb.m_x
        else:
            assert outcome.inactivations_used == toy_gb.m_x
            assert sum(outcome.failure_breakdown.values()) == toy_gb.m_x


def test_si_decode_checks_dimensions(steane):
    with pytest.raises(DimensionMismatchError):
        si_decode(steane, as_bitvec([0, 1]), np.ones(7), MS_SERIAL, SiConfig())


def test_si_config_policies():
    assert SiConfig().lambda_max == 10
    assert SiConfig().resolve_lambda_max(3) == 3
    assert SiConfig(lambda_max="all").resolve_lambda_max(441) == 441
    assert SiConfig(lambda_frac=0.02).resolve_lambda_max(441) == 9
    assert SiConfig(lambda_frac=0.001).resolve_lambda_max(63) == 1
    assert SiConfig(lambda_max=2, restricted_iters=30).restricted_iters == 30
    with pytest.raises(ValidationError):
        SiConfig(lambda_max=0)
    with pytest.raises(ValidationError):
        SiConfig(lambda_max=3, lambda_frac=0.1)
