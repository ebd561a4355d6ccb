from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from app.core.errors import ConfigError
from app.core.gf2 import BitVec
from app.schemas.decoding import Algorithm, DepolarizingParams, ErrorType

LlrVector = np.ndarray


@dataclass(frozen=True)
class RngStream:
    """Random stream keyed by (seed, stream_id); identical keys give identical draws."""

    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream_id])


def marginal_flip_prob(params: DepolarizingParams, error_type: ErrorType = "X") -> float:
    if error_type == "X":
        return params.p_x + params.p_y
    return params.p_z + params.p_y


def _generator(rng: Union[RngStream, np.random.Generator]) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_x_error(n: int, eps: float, rng: Union[RngStream, np.random.Generator]) -> BitVec:
    if not 0 <= eps < 1:
        raise ConfigError(f"flip probability {eps} outside [0, 1)")
    draws = _generator(rng).random(n)
    return (draws < eps).astype(np.uint8)


def a_priori_llrs(n: int, eps: float, algorithm: Algorithm, gamma: float = 1.0) -> LlrVector:
    """Prior LLRs for a BSC: ln((1 - eps) / eps) for SP, the constant ``gamma`` for MS and NMS."""
    if algorithm in ("ms", "nms"):
        return np.full(n, float(gamma))
    return channel_llrs(n, eps)


def channel_llrs(n: int, eps: float) -> LlrVector:
    if not 0 < eps < 1:
        raise ConfigError(f"channel LLR undefined for eps={eps}")
    return np.full(n, math.log((1 - eps) / eps))
