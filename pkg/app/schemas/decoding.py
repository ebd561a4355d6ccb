from __future__ import annotations

import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings

Algorithm = Literal["sp", "ms", "nms"]
Schedule = Literal["flooding", "serial", "layered"]
PostProcessing = Literal["none", "si", "osd0"]
ErrorType = Literal["X", "Z"]


class DecoderConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    algorithm: Algorithm = "sp"
    alpha: float = 1.0
    schedule: Schedule = "flooding"
    layers: Optional[Tuple[Tuple[int, ...], ...]] = None
    max_iters: int = Field(default=100, ge=1)
    # When false every run uses all max_iters; convergence is judged after the last one.
    early_stop: bool = True
    clamp: float = Field(default_factory=lambda: settings.mp_clamp, gt=0)
    # "auto" follows the per-algorithm prior rule, "channel" always uses ln((1-eps)/eps).
    prior_policy: Literal["auto", "channel"] = "auto"
    gamma: float = Field(default=1.0, gt=0)

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, value: float) -> float:
        if not 0 < value <= 1:
            raise ValueError("normalization factor alpha must lie in (0, 1]")
        return value

    @model_validator(mode="after")
    def _check_layers(self) -> "DecoderConfig":
        if self.layers is not None and self.schedule != "layered":
            raise ValueError("layers are only meaningful for the layered schedule")
        return self

    @property
    def label(self) -> str:
        if self.algorithm == "nms":
            return f"nms({self.alpha:g})"
        return self.algorithm

    def with_iters(self, max_iters: int) -> "DecoderConfig":
        return self.model_copy(update={"max_iters": max_iters})


class SiConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_max: Optional[Union[int, Literal["all"]]] = None
    lambda_frac: Optional[float] = Field(default=None, gt=0, le=1)
    mode: Literal["restrict", "zero_llr"] = "restrict"
    restricted_iters: Optional[int] = Field(default=None, ge=1)

    @field_validator("lambda_max")
    @classmethod
    def _check_lambda_max(cls, value: Optional[Union[int, str]]) -> Optional[Union[int, str]]:
        if isinstance(value, int) and value < 1:
            raise ValueError("lambda_max must be at least 1")
        return value

    @model_validator(mode="before")
    @classmethod
    def _default_policy(cls, data: object) -> object:
        if isinstance(data, dict) and data.get("lambda_max") is None and data.get("lambda_frac") is None:
            return {**data, "lambda_max": 10}
        return data

    @model_validator(mode="after")
    def _one_policy(self) -> "SiConfig":
        if self.lambda_max is not None and self.lambda_frac is not None:
            raise ValueError("set either lambda_max or lambda_frac, not both")
        return self

    def resolve_lambda_max(self, m_x: int) -> int:
        if m_x < 1:
            return 0
        if self.lambda_max == "all":
            return m_x
        if self.lambda_frac is not None:
            value = math.ceil(self.lambda_frac * m_x)
        else:
            value = int(self.lambda_max)
        return max(1, min(value, m_x))

    @property
    def label(self) -> str:
        if self.lambda_frac is not None:
            return f"si[{self.lambda_frac:g}m]"
        return f"si[{self.lambda_max}]"


class DepolarizingParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float
    p_x: float
    p_y: float
    p_z: float

    @classmethod
    def symmetric(cls, p: float) -> "DepolarizingParams":
        return cls(p=p, p_x=p / 3, p_y=p / 3, p_z=p / 3)

    @model_validator(mode="after")
    def _check(self) -> "DepolarizingParams":
        if not 0 <= self.p < 1:
            raise ValueError("p must lie in [0, 1)")
        if min(self.p_x, self.p_y, self.p_z) < 0:
            raise ValueError("component probabilities must be non-negative")
        if not math.isclose(self.p_x + self.p_y + self.p_z, self.p, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("p_x + p_y + p_z must equal p")
        return self


class CirculantSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    size: int = Field(ge=1)
    a_support: Tuple[int, ...]
    b_support: Tuple[int, ...]

    @model_validator(mode="after")
    def _check(self) -> "CirculantSpec":
        for label, offsets in (("a_support", self.a_support), ("b_support", self.b_support)):
            if not offsets:
                raise ValueError(f"{label} must be non-empty")
            if len(set(offsets)) != len(offsets):
                raise ValueError(f"{label} has repeated offsets")
            if any(o < 0 or o >= self.size for o in offsets):
                raise ValueError(f"{label} offsets must lie in [0, {self.size})")
        return self


PRESETS = {
    "ms-serial": DecoderConfig(algorithm="ms", schedule="serial", max_iters=50),
    "ms-flooding": DecoderConfig(algorithm="ms", schedule="flooding", max_iters=100),
    "threshold-si": DecoderConfig(algorithm="nms", alpha=0.9, schedule="serial", max_iters=100),
    "threshold-osd": DecoderConfig(algorithm="nms", alpha=0.625, schedule="serial", max_iters=100),
}


def preset_names() -> List[str]:
    return sorted(PRESETS)
