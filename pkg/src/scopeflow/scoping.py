"""Crop-size strategies, uniform crop placement, and crop application.

Four strategies choose a crop size per mini-batch:

* ``FixedPartial(h, w)``: the conventional fixed crop.
* ``MaxValid``: the largest crop every batch member supports.
* ``FixedRatioSet(ratios)``: uniform choice from a fixed set of
  (ratio_h, ratio_w) pairs, each applied as ``round(r * S)``.
* ``RatioRange(r_min, r_max)``: each axis drawn independently and
  uniformly from the integers ``[round(r_min * S), round(r_max * S)]``,
  so the aspect ratio varies.

Rounding is half away from zero. Crop size is drawn once per batch,
placement once per sample; both consume an explicit numpy Generator
(see :mod:`scopeflow.rng`), so a seed pins the whole draw sequence.
Draw order: for sizes, height before width; for placement, y0 before x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CropTooLargeError, InvalidStrategyError, OutOfBoundsError
from .flowio import FlowField, FlowSample, ImageRaster, OcclusionMap


@dataclass(frozen=True)
class CropSpec:
    """Crop extents and top-left placement, all in pixels."""

    h: int
    w: int
    x0: int
    y0: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise InvalidStrategyError(f"crop extents must be >= 1, got {self.h}x{self.w}")
        if self.x0 < 0 or self.y0 < 0:
            raise OutOfBoundsError(f"negative placement ({self.x0}, {self.y0})")


class ScopeStrategy:
    """Base class for the crop-size policies."""


@dataclass(frozen=True)
class FixedPartial(ScopeStrategy):
    """Always the same (h, w) crop."""

    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise InvalidStrategyError(f"fixed crop must be >= 1, got {self.h}x{self.w}")


@dataclass(frozen=True)
class MaxValid(ScopeStrategy):
    """The largest crop valid for every member of the batch."""


@dataclass(frozen=True)
class FixedRatioSet(ScopeStrategy):
    """Uniform choice from a fixed set of (ratio_h, ratio_w) pairs."""

    ratios: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.ratios:
            raise InvalidStrategyError("ratio set must not be empty")
        norm = tuple((float(rh), float(rw)) for rh, rw in self.ratios)
        for rh, rw in norm:
            if not (0 < rh <= 1 and 0 < rw <= 1):
                raise InvalidStrategyError(f"ratios must lie in (0, 1], got ({rh}, {rw})")
        object.__setattr__(self, "ratios", norm)


@dataclass(frozen=True)
class RatioRange(ScopeStrategy):
    """Each axis drawn uniformly from [round(r_min*S), round(r_max*S)]."""

    r_min: float
    r_max: float

    def __post_init__(self):
        if not (0 < self.r_min <= self.r_max <= 1):
            raise InvalidStrategyError(
                f"need 0 < r_min <= r_max <= 1, got [{self.r_min}, {self.r_max}]"
            )


def round_half_away_from_zero(x: float) -> int:
    """Round with ties away from zero (3.5 -> 4, not banker's 2-style)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def ratio_to_size(r: float, S: int) -> int:
    """Crop extent for ratio ``r`` of axis extent ``S``, clamped to [1, S]."""
    return min(max(round_half_away_from_zero(r * S), 1), S)


def choose_crop_size(
    strategy: ScopeStrategy, H: int, W: int, rng: np.random.Generator
) -> tuple[int, int]:
    """Draw the crop size for one batch with images of extent (H, W)."""
    if isinstance(strategy, FixedPartial):
        if strategy.h > H or strategy.w > W:
            raise InvalidStrategyError(
                f"fixed crop {strategy.h}x{strategy.w} exceeds image {H}x{W}"
            )
        return strategy.h, strategy.w
    if isinstance(strategy, MaxValid):
        return H, W
    if isinstance(strategy, FixedRatioSet):
        idx = int(rng.integers(len(strategy.ratios)))
        rh, rw = strategy.ratios[idx]
        return ratio_to_size(rh, H), ratio_to_size(rw, W)
    if isinstance(strategy, RatioRange):
        h = _draw_axis(strategy, H, rng)
        w = _draw_axis(strategy, W, rng)
        return h, w
    raise InvalidStrategyError(f"unknown strategy {strategy!r}")


def _draw_axis(strategy: RatioRange, S: int, rng: np.random.Generator) -> int:
    lo = ratio_to_size(strategy.r_min, S)
    hi = ratio_to_size(strategy.r_max, S)
    return int(rng.integers(lo, hi + 1))


def place_crop(h: int, w: int, H: int, W: int, rng: np.random.Generator) -> CropSpec:
    """Place an (h, w) crop uniformly over its valid top-left positions."""
    if h > H or w > W:
        raise CropTooLargeError(f"crop {h}x{w} does not fit in {H}x{W}")
    y0 = int(rng.integers(0, H - h + 1))
    x0 = int(rng.integers(0, W - w + 1))
    return CropSpec(h=h, w=w, x0=x0, y0=y0)


def max_valid_crop(sizes: Iterable[tuple[int, int]]) -> tuple[int, int]:
    """Largest (h, w) supported by every image size in the batch."""
    sizes = list(sizes)
    if not sizes:
        raise InvalidStrategyError("empty batch has no valid crop size")
    return min(s[0] for s in sizes), min(s[1] for s in sizes)


def crop_array(arr: np.ndarray, c: CropSpec) -> np.ndarray:
    H, W = arr.shape[:2]
    if c.y0 + c.h > H or c.x0 + c.w > W:
        raise OutOfBoundsError(f"crop {c} exceeds raster {H}x{W}")
    return arr[c.y0 : c.y0 + c.h, c.x0 : c.x0 + c.w].copy()


def crop_flow(flow: FlowField, c: CropSpec) -> FlowField:
    """Crop a flow field; displacement values are untouched by cropping."""
    return FlowField(
        crop_array(flow.u, c), crop_array(flow.v, c), crop_array(flow.valid, c)
    )


def apply_crop(sample: FlowSample, c: CropSpec) -> FlowSample:
    """Crop all rasters of a sample to the same window."""
    occ = (
        OcclusionMap(crop_array(sample.occlusion.occluded, c))
        if sample.occlusion is not None
        else None
    )
    return FlowSample(
        frame1=ImageRaster(crop_array(sample.frame1.data, c)),
        frame2=ImageRaster(crop_array(sample.frame2.data, c)),
        flow=crop_flow(sample.flow, c),
        occlusion=occ,
    )


# ----------------------------------------------------------------------------
# strategy serialization (CLI flag and YAML stage config)
# ----------------------------------------------------------------------------

def parse_strategy(text: str) -> ScopeStrategy:
    """Parse the CLI strategy flag.

    Accepted forms: ``fixed:H,W``, ``max``, ``set:rh1,rw1;rh2,rw2;...``,
    ``range:rmin,rmax``.
    """
    kind, _, rest = text.partition(":")
    try:
        if kind == "fixed":
            h, w = (int(s) for s in rest.split(","))
            return FixedPartial(h, w)
        if kind == "max":
            return MaxValid()
        if kind == "set":
            pairs = []
            for chunk in rest.split(";"):
                rh, rw = (float(s) for s in chunk.split(","))
                pairs.append((rh, rw))
            return FixedRatioSet(tuple(pairs))
        if kind == "range":
            r_min, r_max = (float(s) for s in rest.split(","))
            return RatioRange(r_min, r_max)
    except (ValueError, TypeError) as exc:
        raise InvalidStrategyError(f"cannot parse strategy {text!r}: {exc}") from exc
    raise InvalidStrategyError(f"unknown strategy kind {kind!r}")


def format_strategy(strategy: ScopeStrategy) -> str:
    if isinstance(strategy, FixedPartial):
        return f"fixed:{strategy.h},{strategy.w}"
    if isinstance(strategy, MaxValid):
        return "max"
    if isinstance(strategy, FixedRatioSet):
        body = ";".join(f"{rh:g},{rw:g}" for rh, rw in strategy.ratios)
        return f"set:{body}"
    if isinstance(strategy, RatioRange):
        return f"range:{strategy.r_min:g},{strategy.r_max:g}"
    raise InvalidStrategyError(f"unknown strategy {strategy!r}")


def strategy_to_config(strategy: ScopeStrategy) -> dict:
    """Strategy as the mapping used inside YAML stage configs."""
    if isinstance(strategy, FixedPartial):
        return {"kind": "fixed", "h": strategy.h, "w": strategy.w}
    if isinstance(strategy, MaxValid):
        return {"kind": "max"}
    if isinstance(strategy, FixedRatioSet):
        return {"kind": "set", "ratios": [[rh, rw] for rh, rw in strategy.ratios]}
    if isinstance(strategy, RatioRange):
        return {"kind": "range", "min": strategy.r_min, "max": strategy.r_max}
    raise InvalidStrategyError(f"unknown strategy {strategy!r}")


def strategy_from_config(cfg: dict) -> ScopeStrategy:
    kind = cfg.get("kind")
    if kind == "fixed":
        return FixedPartial(int(cfg["h"]), int(cfg["w"]))
    if kind == "max":
        return MaxValid()
    if kind == "set":
        return FixedRatioSet(tuple((float(rh), float(rw)) for rh, rw in cfg["ratios"]))
    if kind == "range":
        return RatioRange(float(cfg["min"]), float(cfg["max"]))
    raise InvalidStrategyError(f"unknown crop kind {kind!r}")
