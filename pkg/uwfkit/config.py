"""
Pipeline configuration.

Precedence, lowest first: model defaults, TOML file (--config or
$UWFKIT_CONFIG), explicit overrides from the command line or API.
"""

from __future__ import annotations

import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from uwfkit.vesselness import Polarity, VesselParams

logger = logging.getLogger(__name__)

CONFIG_ENV = "UWFKIT_CONFIG"
REFERENCE_RESOLUTION = 1024
MIN_THRESH_PX = 1.0


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VesselnessConfig(_Section):
    scales: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    beta: float = Field(0.5, gt=0)
    c: float | None = Field(None, gt=0)
    # RI shows dark vessels on a bright fundus, FA bright vessels on dark
    ri_polarity: Polarity = "dark"
    fa_polarity: Polarity = "bright"
    # features are kept this many (largest) sigmas inside the crop edge
    edge_shrink_sigmas: float = Field(3.0, ge=0)

    @field_validator("scales")
    @classmethod
    def _positive_scales(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not v:
            raise ValueError("at least one scale is required")
        if any(s <= 0 for s in v):
            raise ValueError("scales must be positive")
        return v

    def params(self, polarity: Polarity) -> VesselParams:
        return VesselParams(scales=self.scales, beta=self.beta, c=self.c, polarity=polarity)


class FeatureConfig(_Section):
    octaves: int = Field(4, ge=1)
    sublevels: int = Field(4, ge=1)
    threshold: float = Field(1e-3, gt=0)
    max_keypoints: int = Field(2000, ge=1)


class MatchingConfig(_Section):
    ratio: float = Field(0.8, gt=0, le=1)
    # measured at REFERENCE_RESOLUTION, scaled to the working resolution
    ransac_thresh_px: float = Field(3.0, gt=0)
    ransac_conf: float = Field(0.995, gt=0, lt=1)
    ransac_max_iter: int = Field(2000, ge=1)
    min_inliers: int = Field(8, ge=4)

    def thresh_at(self, size: int) -> float:
        return max(self.ransac_thresh_px * size / REFERENCE_RESOLUTION, MIN_THRESH_PX)


class GateConfig(_Section):
    dice_min: float = Field(0.5, ge=0, le=1)
    scale_min: float = Field(0.8, gt=0)
    scale_max: float = Field(1.3, gt=0)
    rotation_max: float = Field(2.0, gt=0)


class EvaluationConfig(_Section):
    resize: bool = True
    gv_patch: int = Field(8, ge=1)
    crop_mask: bool = True


class PipelineConfig(_Section):
    working_resolution: int = Field(1024, ge=64)
    crop_margin: float = Field(0.05, ge=0, lt=0.5)
    split_ratio: tuple[int, int, int] = (8, 1, 1)
    seed: int = 0
    workers: int = Field(1, ge=1)

    vesselness: VesselnessConfig = VesselnessConfig()
    features: FeatureConfig = FeatureConfig()
    matching: MatchingConfig = MatchingConfig()
    gate: GateConfig = GateConfig()
    evaluation: EvaluationConfig = EvaluationConfig()

    @field_validator("split_ratio", mode="before")
    @classmethod
    def _parse_ratio(cls, v: Any) -> Any:
        if isinstance(v, str):
            return parse_ratio(v)
        return v

    @field_validator("split_ratio")
    @classmethod
    def _positive_ratio(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        if any(part <= 0 for part in v):
            raise ValueError(f"split ratio components must be positive, got {v}")
        return v


def parse_ratio(text: str) -> tuple[int, int, int]:
    """'8:1:1' -> (8, 1, 1)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"ratio must look like a:b:c, got {text!r}")
    try:
        return tuple(int(p) for p in parts)  # type: ignore[return-value]
    except ValueError as e:
        raise ValueError(f"ratio components must be integers, got {text!r}") from e


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if value is None:
            continue
        if isinstance(value, dict):
            inner = out.get(key)
            out[key] = _deep_merge(inner if isinstance(inner, dict) else {}, value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig; `None` override values are ignored."""
    data: dict = {}
    path = path or os.getenv(CONFIG_ENV) or None
    if path:
        with open(path, "rb") as f:
            data = tomllib.load(f)
        logger.info("Loaded config from %s", path)
    if overrides:
        data = _deep_merge(data, overrides)
    return PipelineConfig.model_validate(data)
