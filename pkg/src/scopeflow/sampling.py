"""Per-pixel sampling probability under uniformly random crop placement.

For a 1-D axis of extent ``W`` and a crop of extent ``w`` there are
``W - w + 1`` valid placements. Write ``dx`` for a pixel's 1-based
distance to the nearest border (an edge pixel has ``dx = 1``) and
``dw = W - w``. A uniformly placed crop covers the pixel with probability

    1                if dw < dx   (always covered)
    w  / (dw + 1)    if w <= dx   (interior)
    dx / (dw + 1)    otherwise    (marginal)

The 2-D probability is the product of the two axis probabilities, since
the placement coordinates are drawn independently. For a marginal pixel
this equals ``min(dx, dw) * min(dy, dh) / ((dw + 1) * (dh + 1))``.

Probabilities are exact rationals (``fractions.Fraction``); conversion
to floats happens only at export boundaries such as ``probability_map``.
An exhaustive placement-enumeration oracle is provided so the closed
form is testable against brute force rather than trusted.

All functions are pure; ``probability_map`` is vectorized per axis and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyCategoryError,
    InvalidGeometryError,
    OutOfBoundsError,
    TooLargeError,
)
from .flowio import FlowField

#: slowest/fastest speed cut-offs (px/frame) of the two motion categories
SLOW_MAX_SPEED = 10.0
FAST_MIN_SPEED = 40.0

#: refuse exhaustive enumeration beyond this many placements
MAX_ORACLE_PLACEMENTS = 10**8


@dataclass(frozen=True)
class Geometry1D:
    """Axis extents of an image and a crop: 1 <= w <= W."""

    W: int
    w: int

    def __post_init__(self):
        if not (1 <= self.w <= self.W):
            raise InvalidGeometryError(f"need 1 <= w <= W, got w={self.w}, W={self.W}")

    @property
    def dw(self) -> int:
        return self.W - self.w

    @property
    def n_placements(self) -> int:
        return self.dw + 1


@dataclass(frozen=True)
class Geometry2D:
    """Image extents (H, W) and crop extents (h, w)."""

    H: int
    W: int
    h: int
    w: int

    def __post_init__(self):
        if not (1 <= self.h <= self.H):
            raise InvalidGeometryError(f"need 1 <= h <= H, got h={self.h}, H={self.H}")
        if not (1 <= self.w <= self.W):
            raise InvalidGeometryError(f"need 1 <= w <= W, got w={self.w}, W={self.W}")

    @property
    def dh(self) -> int:
        return self.H - self.h

    @property
    def dw(self) -> int:
        return self.W - self.w

    @property
    def n_placements(self) -> int:
        return (self.dw + 1) * (self.dh + 1)

    @property
    def axis_x(self) -> Geometry1D:
        return Geometry1D(self.W, self.w)

    @property
    def axis_y(self) -> Geometry1D:
        return Geometry1D(self.H, self.h)


class PixelClass(Enum):
    """The three coverage regimes of a pixel under random cropping."""

    ALWAYS = "always"      # covered by every valid placement
    INTERIOR = "interior"  # covered with probability w / (dw + 1)
    MARGINAL = "marginal"  # covered with probability dx / (dw + 1)


def delta_border_1d(x: int, W: int) -> int:
    """1-based distance from pixel ``x`` to the nearest border of [0, W)."""
    if not 0 <= x < W:
        raise OutOfBoundsError(f"pixel {x} outside [0, {W})")
    return min(x, W - 1 - x) + 1


def classify_1d(x: int, g: Geometry1D) -> PixelClass:
    """Coverage regime of pixel ``x``. INTERIOR is empty whenever w > W/2."""
    dx = delta_border_1d(x, g.W)
    if g.dw < dx:
        return PixelClass.ALWAYS
    if g.w <= dx:
        return PixelClass.INTERIOR
    return PixelClass.MARGINAL


def prob_1d(x: int, g: Geometry1D) -> Fraction:
    """Exact probability that a uniformly placed crop covers pixel ``x``."""
    dx = delta_border_1d(x, g.W)
    if g.dw < dx:
        return Fraction(1)
    if g.w <= dx:
        return Fraction(g.w, g.n_placements)
    return Fraction(dx, g.n_placements)


def prob_2d(x: int, y: int, g: Geometry2D) -> Fraction:
    """Exact 2-D coverage probability; the product of the axis probabilities."""
    return prob_1d(x, g.axis_x) * prob_1d(y, g.axis_y)


def exhaustive_oracle_1d(x: int, g: Geometry1D) -> Fraction:
    """Enumerate every placement and count the ones covering ``x``."""
    if not 0 <= x < g.W:
        raise OutOfBoundsError(f"pixel {x} outside [0, {g.W})")
    covered = sum(1 for x0 in range(g.n_placements) if x0 <= x < x0 + g.w)
    return Fraction(covered, g.n_placements)


def exhaustive_oracle_2d(x: int, y: int, g: Geometry2D) -> Fraction:
    """Enumerate every 2-D placement and count the ones covering ``(x, y)``.

    Refuses geometries with more than MAX_ORACLE_PLACEMENTS placements.
    """
    if not 0 <= x < g.W:
        raise OutOfBoundsError(f"pixel x={x} outside [0, {g.W})")
    if not 0 <= y < g.H:
        raise OutOfBoundsError(f"pixel y={y} outside [0, {g.H})")
    if g.n_placements > MAX_ORACLE_PLACEMENTS:
        raise TooLargeError(
            f"{g.n_placements} placements exceed the enumeration cap"
        )
    covered = 0
    for y0 in range(g.dh + 1):
        if not y0 <= y < y0 + g.h:
            continue
        for x0 in range(g.dw + 1):
            if x0 <= x < x0 + g.w:
                covered += 1
    return Fraction(covered, g.n_placements)


def exhaustive_count_map(g: Geometry2D) -> tuple[np.ndarray, int]:
    """Coverage counts for all pixels by enumerating every placement.

    Returns ``(counts, n_placements)`` where ``counts[y, x]`` is the
    number of placements covering the pixel. This is the batch form of
    ``exhaustive_oracle_2d`` and is used to verify the closed form over
    full geometry sweeps.
    """
    if g.n_placements > MAX_ORACLE_PLACEMENTS:
        raise TooLargeError(f"{g.n_placements} placements exceed the enumeration cap")
    counts = np.zeros((g.H, g.W), dtype=np.int64)
    for y0 in range(g.dh + 1):
        for x0 in range(g.dw + 1):
            counts[y0 : y0 + g.h, x0 : x0 + g.w] += 1
    return counts, g.n_placements


def axis_numerators(g: Geometry1D) -> np.ndarray:
    """Integer numerators of prob_1d over all pixels, denominator dw + 1."""
    x = np.arange(g.W, dtype=np.int64)
    dx = np.minimum(x, g.W - 1 - x) + 1
    num = np.where(g.dw < dx, g.n_placements, np.where(g.w <= dx, g.w, dx))
    return num.astype(np.int64)


def probability_map(g: Geometry2D) -> np.ndarray:
    """Coverage probability of every pixel as a float64 (H, W) raster."""
    nx = axis_numerators(g.axis_x)
    ny = axis_numerators(g.axis_y)
    return np.outer(ny, nx).astype(np.float64) / float(g.n_placements)


def always_covered_region(g: Geometry2D) -> tuple[int, int]:
    """Extents (height, width) of the central block covered by every placement."""
    return max(g.H - 2 * g.dh, 0), max(g.W - 2 * g.dw, 0)


@dataclass(frozen=True)
class CategoryRatio:
    """Mean coverage probability of the fast and slow speed categories."""

    fast_mass: float
    slow_mass: float
    ratio: float
    n_fast: int
    n_slow: int


def category_sampling_ratio(
    flow: FlowField,
    g: Geometry2D,
    slow_max: float = SLOW_MAX_SPEED,
    fast_min: float = FAST_MIN_SPEED,
) -> CategoryRatio:
    """Mean coverage probability of fast versus slow pixels.

    Fast pixels move strictly faster than ``fast_min`` px/frame, slow
    ones strictly slower than ``slow_max``. Each category is weighted by
    its per-pixel mean, so the ratio is independent of category sizes.
    Invalid pixels never count. Raises EmptyCategoryError when either
    category has no pixels.
    """
    if (flow.height, flow.width) != (g.H, g.W):
        raise DimMismatchError(
            f"flow is {flow.height}x{flow.width}, geometry expects {g.H}x{g.W}"
        )
    speed = flow.speed()
    fast = flow.valid & (speed > fast_min)
    slow = flow.valid & (speed < slow_max)
    n_fast = int(fast.sum())
    n_slow = int(slow.sum())
    if n_fast == 0 or n_slow == 0:
        raise EmptyCategoryError(
            f"fast has {n_fast} pixels, slow has {n_slow}; ratio is undefined"
        )
    pmap = probability_map(g)
    fast_mass = float(pmap[fast].mean())
    slow_mass = float(pmap[slow].mean())
    return CategoryRatio(fast_mass, slow_mass, fast_mass / slow_mass, n_fast, n_slow)
