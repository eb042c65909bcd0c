"""Dense warping, correlation and evaluation kernels (CPU, numpy).

All kernels are pure and data-parallel over pixels. Warp samples that
fall outside the source raster are zero-filled and flagged so callers
can exclude them explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, NoValidPixelsError
from .flowio import FlowField, OcclusionMap


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-pixel feature vectors, shape (H, W, N)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] < 1:
            raise ValueError(f"feature map must be (H, W, N), got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Correlation scores over a square displacement window.

    ``values`` has shape (H, W, (2d+1)**2); the score for offset
    (dy, dx) lives at channel ``offset_index(dy, dx)``.
    """

    values: np.ndarray
    d: int

    def __post_init__(self):
        values = np.asarray(self.values)
        k = (2 * self.d + 1) ** 2
        if values.ndim != 3 or values.shape[2] != k:
            raise ValueError(
                f"expected (H, W, {k}) values for d={self.d}, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def offset_index(self, dy: int, dx: int) -> int:
        side = 2 * self.d + 1
        if abs(dy) > self.d or abs(dx) > self.d:
            raise ValueError(f"offset ({dy}, {dx}) outside window of radius {self.d}")
        return (dy + self.d) * side + (dx + self.d)


def _as_array(src) -> np.ndarray:
    return np.asarray(src.data if hasattr(src, "data") else src)


def bilinear_sample(
    data: np.ndarray, xs: np.ndarray, ys: np.ndarray, *, oob: str = "zero"
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``data`` at real-valued coordinates with bilinear weights.

    ``data`` is (H, W) or (H, W, C). Returns ``(values, inbounds)`` in
    float64, where ``inbounds`` flags coordinates inside
    ``[0, W-1] x [0, H-1]``. With ``oob="zero"`` outside samples are 0;
    with ``oob="clamp"`` coordinates are clamped to the border first.
    """
    arr = np.asarray(data, dtype=np.float64)
    H, W = arr.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inb = (xs >= 0.0) & (xs <= W - 1.0) & (ys >= 0.0) & (ys <= H - 1.0)

    if oob == "clamp":
        xq = np.clip(xs, 0.0, W - 1.0)
        yq = np.clip(ys, 0.0, H - 1.0)
    elif oob == "zero":
        xq = np.where(inb, xs, 0.0)
        yq = np.where(inb, ys, 0.0)
    else:
        raise ValueError(f"unknown oob mode {oob!r}")

    # anchor on the top-left corner; at the far edge shift the anchor back
    # one cell so the fractional weight lands fully on the last pixel
    x0 = np.clip(np.floor(xq).astype(np.int64), 0, max(W - 2, 0))
    y0 = np.clip(np.floor(yq).astype(np.int64), 0, max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xq - x0
    fy = yq - y0

    a00 = arr[y0, x0]
    a01 = arr[y0, x1]
    a10 = arr[y1, x0]
    a11 = arr[y1, x1]
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    if arr.ndim == 3:
        w00, w01, w10, w11 = (w[..., None] for w in (w00, w01, w10, w11))
    out = w00 * a00 + w01 * a01 + w10 * a10 + w11 * a11

    if oob == "zero":
        mask = inb if arr.ndim == 2 else inb[..., None]
        out = np.where(mask, out, 0.0)
    return out, inb


def backward_warp(src, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Resample ``src`` at ``x + flow(x)`` with bilinear interpolation.

    ``src`` may be an ImageRaster, FeatureMap or bare array whose leading
    dimensions match the flow. Returns ``(warped, inbounds)``; samples
    outside the source are zero-filled and flagged False.
    """
    arr = _as_array(src)
    if arr.shape[:2] != (flow.height, flow.width):
        raise DimMismatchError(
            f"source {arr.shape[:2]} does not match flow {(flow.height, flow.width)}"
        )
    ys, xs = np.mgrid[0 : flow.height, 0 : flow.width]
    return bilinear_sample(
        arr, xs + np.asarray(flow.u, np.float64), ys + np.asarray(flow.v, np.float64)
    )


def upsample_flow_2x(flow: FlowField) -> FlowField:
    """Double the resolution of a flow field.

    Components are bilinearly resized and their values doubled so the
    displacements stay correct in the finer grid's pixel units. Validity
    is transported by nearest neighbor.
    """
    H2, W2 = 2 * flow.height, 2 * flow.width
    ys, xs = np.mgrid[0:H2, 0:W2]
    sx = (xs + 0.5) / 2.0 - 0.5
    sy = (ys + 0.5) / 2.0 - 0.5
    u2, _ = bilinear_sample(flow.u, sx, sy, oob="clamp")
    v2, _ = bilinear_sample(flow.v, sx, sy, oob="clamp")
    nx = np.clip(np.rint(sx).astype(np.int64), 0, flow.width - 1)
    ny = np.clip(np.rint(sy).astype(np.int64), 0, flow.height - 1)
    return FlowField(2.0 * u2, 2.0 * v2, flow.valid[ny, nx])


def cost_volume(c1, c2_warped, d: int) -> CostVolume:
    """Normalized feature correlations over all offsets with sup-norm <= d.

    ``values[y, x, k]`` is ``dot(c1[y, x], c2_warped[y+dy, x+dx]) / N``
    for the offset (dy, dx) at channel k; partners outside the raster
    contribute zero.
    """
    a = np.asarray(_as_array(c1), dtype=np.float64)
    b = np.asarray(_as_array(c2_warped), dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"feature shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise ValueError(f"feature maps must be (H, W, N), got {a.shape}")
    H, W, N = a.shape
    side = 2 * d + 1
    values = np.zeros((H, W, side * side), dtype=np.float64)
    for dy in range(-d, d + 1):
        ys_dst = slice(max(0, -dy), min(H, H - dy))
        ys_src = slice(max(0, dy), min(H, H + dy))
        for dx in range(-d, d + 1):
            xs_dst = slice(max(0, -dx), min(W, W - dx))
            xs_src = slice(max(0, dx), min(W, W + dx))
            shifted = np.zeros_like(b)
            shifted[ys_dst, xs_dst] = b[ys_src, xs_src]
            k = (dy + d) * side + (dx + d)
            values[:, :, k] = np.einsum("hwc,hwc->hw", a, shifted) / N
    return CostVolume(values, d)


def _check_same_dims(pred: FlowField, gt: FlowField) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimMismatchError(
            f"pred is {pred.height}x{pred.width}, gt is {gt.height}x{gt.width}"
        )


def epe_map(pred: FlowField, gt: FlowField) -> np.ndarray:
    """Per-pixel end-point error, regardless of validity."""
    _check_same_dims(pred, gt)
    du = np.asarray(pred.u, np.float64) - np.asarray(gt.u, np.float64)
    dv = np.asarray(pred.v, np.float64) - np.asarray(gt.v, np.float64)
    return np.hypot(du, dv)


def epe(pred: FlowField, gt: FlowField) -> float:
    """Mean end-point error over the ground truth's valid pixels."""
    errors = epe_map(pred, gt)
    if not gt.valid.any():
        raise NoValidPixelsError("ground truth has no valid pixels")
    return float(errors[gt.valid].mean())


def outlier_rate(pred: FlowField, gt: FlowField, threshold: float = 3.0) -> float:
    """Fraction of gt-valid pixels with end-point error above ``threshold``."""
    errors = epe_map(pred, gt)
    if not gt.valid.any():
        raise NoValidPixelsError("ground truth has no valid pixels")
    return float((errors[gt.valid] > threshold).mean())


@dataclass(frozen=True)
class F1Result:
    """Micro-averaged F1 of an occlusion prediction.

    ``no_positives`` flags the degenerate all-negative case where the
    score is 1 by convention.
    """

    score: float
    no_positives: bool


def occlusion_f1(pred: OcclusionMap, gt: OcclusionMap) -> F1Result:
    """Micro-averaged F1 with "occluded" as the positive class."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimMismatchError(
            f"pred is {pred.height}x{pred.width}, gt is {gt.height}x{gt.width}"
        )
    tp = int((pred.occluded & gt.occluded).sum())
    fp = int((pred.occluded & ~gt.occluded).sum())
    fn = int((~pred.occluded & gt.occluded).sum())
    denom = 2 * tp + fp + fn
    if denom == 0:
        return F1Result(1.0, True)
    return F1Result(2 * tp / denom, False)
