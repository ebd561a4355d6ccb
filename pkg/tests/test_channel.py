from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.schemas.decoding import DepolarizingParams
from app.services.channel import (
    RngStream,
    a_priori_llrs,
    channel_llrs,
    marginal_flip_prob,
    sample_x_error,
)


def test_marginal_flip_prob_examples():
    assert round(marginal_flip_prob(DepolarizingParams.symmetric(0.1)), 4) == 0.0667
    assert marginal_flip_prob(DepolarizingParams.symmetric(0.06)) == pytest.approx(0.04)
    assert marginal_flip_prob(DepolarizingParams.symmetric(0.0)) == 0.0


def test_marginal_flip_prob_for_z_errors():
    params = DepolarizingParams(p=0.1, p_x=0.05, p_y=0.02, p_z=0.03)
    assert marginal_flip_prob(params, "X") == pytest.approx(0.07)
    assert marginal_flip_prob(params, "Z") == pytest.approx(0.05)


def test_depolarizing_params_validation():
    with pytest.raises(ValueError):
        DepolarizingParams(p=0.1, p_x=0.05, p_y=0.05, p_z=0.05)
    with pytest.raises(ValueError):
        DepolarizingParams.symmetric(1.0)


def test_sample_zero_eps_gives_zero_vector():
    assert not sample_x_error(50, 0.0, RngStream(1, 0)).any()


def test_sample_weight_statistics():
    n = 100_000
    weight = int(sample_x_error(n, 0.5, RngStream(2022, 0)).sum())
    assert abs(weight - n / 2) <= 3 * math.sqrt(n / 4)


def test_sample_is_deterministic_per_stream():
    first = sample_x_error(200, 0.1, RngStream(7, 3))
    again = sample_x_error(200, 0.1, RngStream(7, 3))
    other = sample_x_error(200, 0.1, RngStream(7, 4))
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_sample_accepts_a_generator():
    vec = sample_x_error(10, 0.3, np.random.default_rng(0))
    assert vec.dtype == np.uint8
    assert vec.shape == (10,)


def test_sample_rejects_eps_out_of_range():
    with pytest.raises(ConfigError):
        sample_x_error(10, 1.0, RngStream(0, 0))
    with pytest.raises(ConfigError):
        sample_x_error(10, -0.1, RngStream(0, 0))


def test_a_priori_llrs_examples():
    assert a_priori_llrs(5, 0.04, "sp") == pytest.approx(np.full(5, 3.1781), abs=1e-4)
    assert a_priori_llrs(3, 0.5, "sp") == pytest.approx(np.zeros(3))
    assert np.array_equal(a_priori_llrs(4, 0.2, "ms"), np.ones(4))
    assert np.array_equal(a_priori_llrs(4, 0.2, "nms", gamma=2.5), np.full(4, 2.5))


def test_channel_llrs_reject_degenerate_eps():
    with pytest.raises(ConfigError):
        channel_llrs(3, 0.0)
    with pytest.raises(ConfigError):
        a_priori_llrs(3, 1.0, "sp")


def test_mean_error_weight_over_trials():
    n, eps, trials = 126, 0.04, 4000
    weights = np.array([int(sample_x_error(n, eps, RngStream(2022, t)).sum()) for t in range(trials)])
    sigma = math.sqrt(n * eps * (1 - eps) / trials)
    assert abs(weights.mean() - n * eps) <= 3 * sigma
