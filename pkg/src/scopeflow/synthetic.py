"""Synthetic scenes with analytically known ground truth.

The test-suite oracles and the demo scripts need frame pairs whose flow
is exact by construction. A smooth band-limited texture is evaluated
analytically at continuous coordinates, so a pair built by
``warped_pair`` satisfies ``frame1(x) = texture(x + flow(x))`` with no
resampling error: backward-warping frame2 by the flow must reconstruct
frame1 up to bilinear interpolation error of the warp itself.
"""

from __future__ import annotations

import numpy as np

from .flowio import FlowField, FlowSample, ImageRaster, OcclusionMap
from .rng import make_rng

TWO_PI = 2.0 * np.pi


def smooth_texture(seed: int, *, waves: int = 6, max_frequency: float = 1 / 16):
    """Band-limited random texture as a callable ``tex(x, y) -> [0.1, 0.9]``.

    Low spatial frequencies keep bilinear interpolation error far below
    the tolerances used by the warp-reconstruction oracles.
    """
    rng = make_rng(seed)
    angles = rng.uniform(0.0, TWO_PI, waves)
    freqs = rng.uniform(max_frequency / 4.0, max_frequency, waves)
    phases = rng.uniform(0.0, TWO_PI, waves)
    amps = rng.uniform(0.5, 1.0, waves)
    amps *= 0.4 / amps.sum()
    fx = freqs * np.cos(angles)
    fy = freqs * np.sin(angles)

    def tex(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        acc = np.full(np.broadcast(x, y).shape, 0.5)
        for k in range(waves):
            acc = acc + amps[k] * np.sin(TWO_PI * (fx[k] * x + fy[k] * y) + phases[k])
        return acc

    return tex


def sample_texture(tex, H: int, W: int, channels: int = 1) -> ImageRaster:
    """Evaluate a texture (or one per channel) on the integer pixel grid."""
    ys, xs = np.mgrid[0:H, 0:W]
    if channels == 1:
        return ImageRaster(tex(xs, ys))
    planes = [t(xs, ys) for t in tex]
    return ImageRaster(np.stack(planes, axis=-1))


def smooth_flow(H: int, W: int, *, max_speed: float = 3.0, seed: int = 0) -> FlowField:
    """Slowly varying sinusoidal flow with per-component bound max_speed/sqrt(2)."""
    rng = make_rng(seed)
    amp = max_speed / np.sqrt(2.0)
    ys, xs = np.mgrid[0:H, 0:W]
    fu = rng.uniform(1 / 128, 1 / 32, 2)
    fv = rng.uniform(1 / 128, 1 / 32, 2)
    pu, pv = rng.uniform(0.0, TWO_PI, 2)
    u = amp * np.sin(TWO_PI * (fu[0] * xs + fu[1] * ys) + pu)
    v = amp * np.cos(TWO_PI * (fv[0] * xs + fv[1] * ys) + pv)
    return FlowField.dense(u, v)


def blob_occlusions(H: int, W: int, *, seed: int = 0) -> OcclusionMap:
    """Blobby occlusion mask by thresholding a smooth texture."""
    tex = smooth_texture(seed + 17)
    ys, xs = np.mgrid[0:H, 0:W]
    return OcclusionMap(tex(xs, ys) > 0.62)


def warped_pair(
    H: int,
    W: int,
    flow: FlowField | None = None,
    *,
    seed: int = 0,
    channels: int = 1,
    max_speed: float = 3.0,
    with_occlusion: bool = False,
) -> FlowSample:
    """Frame pair consistent with a known flow, sampled analytically.

    frame2 is the texture on the pixel grid; frame1 is the same texture
    evaluated at ``x + flow(x)``, so the flow maps frame1 pixels onto
    frame2 content exactly.
    """
    if flow is None:
        flow = smooth_flow(H, W, max_speed=max_speed, seed=seed)
    ys, xs = np.mgrid[0:H, 0:W]
    if channels == 1:
        textures = smooth_texture(seed)
        frame2 = ImageRaster(textures(xs, ys))
        frame1 = ImageRaster(textures(xs + flow.u, ys + flow.v))
    else:
        textures = [smooth_texture(seed * 31 + c) for c in range(channels)]
        frame2 = ImageRaster(np.stack([t(xs, ys) for t in textures], axis=-1))
        frame1 = ImageRaster(
            np.stack([t(xs + flow.u, ys + flow.v) for t in textures], axis=-1)
        )
    occ = blob_occlusions(H, W, seed=seed) if with_occlusion else None
    return FlowSample(frame1=frame1, frame2=frame2, flow=flow, occlusion=occ)


def border_speed_flow(
    H: int,
    W: int,
    *,
    border: int = 10,
    slow_speed: float = 1.0,
    fast_speed: float = 50.0,
) -> FlowField:
    """Flow whose fast pixels form a border ring around a slow center."""
    u = np.full((H, W), slow_speed)
    u[:border, :] = fast_speed
    u[-border:, :] = fast_speed
    u[:, :border] = fast_speed
    u[:, -border:] = fast_speed
    return FlowField.dense(u, np.zeros((H, W)))
