"""Photometric and geometric augmentation with flow-correct ground truth.

Geometric augmentation resamples frame 1 under an affine map T1 and
frame 2 under T2 = T1 composed with an optional small relative
perturbation of the second frame. The flow is transformed by the
correspondence rule

    f'(x) = T2(p + f(p)) - x,   p = T1^-1(x)

which is the unique update that keeps augmented flow vectors pointing
from augmented frame-1 pixels to the matching frame-2 content. Flips are
applied after the affine resampling as exact mirror operations that
negate the corresponding flow component.

Photometric augmentation maps intensities through
``clamp((gain * I) ** gamma + N(0, sigma^2), 0, 1)``; noise is drawn
independently per pixel and per frame, and a zero sigma adds nothing
(bit-exact passthrough of that term).

Validity masks are transported by nearest neighbor and cleared where the
source coordinate leaves the raster; flow values at invalid targets are
zeroed rather than interpolated across gaps. The visible pipeline order
is photometric, then geometric, then cropping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadConfigError, SingularTransformError
from .flowio import FlowField, FlowSample, ImageRaster, OcclusionMap
from .flowops import bilinear_sample

DEFAULT_GAIN_RANGE = (0.8, 1.2)
DEFAULT_GAMMA_RANGE = (0.7, 1.5)
DEFAULT_NOISE_SIGMA_MAX = 0.04


@dataclass(frozen=True)
class RelativeAffine:
    """Small extra affine applied to frame 2 only."""

    rotation: float = 0.0          # radians
    translation: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class AugmentationParams:
    """One sampled photometric + geometric transform for a frame pair."""

    zoom: float = 1.0
    rotation: float = 0.0          # radians
    translation: tuple[float, float] = (0.0, 0.0)
    hflip: bool = False
    vflip: bool = False
    relative: RelativeAffine | None = None
    color_gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    gamma: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.zoom <= 0:
            raise BadConfigError(f"zoom must be positive, got {self.zoom}")
        if self.gamma <= 0:
            raise BadConfigError(f"gamma must be positive, got {self.gamma}")
        if self.noise_sigma < 0:
            raise BadConfigError(f"noise sigma must be >= 0, got {self.noise_sigma}")

    @property
    def geometric_identity(self) -> bool:
        return (
            self.zoom == 1.0
            and self.rotation == 0.0
            and self.translation == (0.0, 0.0)
            and self.relative is None
        )

    @property
    def photometric_identity(self) -> bool:
        return (
            self.color_gain == (1.0, 1.0, 1.0)
            and self.gamma == 1.0
            and self.noise_sigma == 0.0
        )


@dataclass(frozen=True)
class ZoomSchedule:
    """Zoom range whose upper bound moves linearly over a stage.

    At stage progress p in [0, 1] the sampled zoom is uniform in
    [zmin, zmax_start + p * (zmax_end - zmax_start)].
    """

    zmin: float = 1.0
    zmax_start: float = 1.0
    zmax_end: float = 1.0

    def __post_init__(self):
        if not (0 < self.zmin <= self.zmax_end <= self.zmax_start):
            raise BadConfigError(
                f"need 0 < zmin <= zmax_end <= zmax_start, got "
                f"({self.zmin}, {self.zmax_start}, {self.zmax_end})"
            )

    def zmax_at(self, progress: float) -> float:
        if not 0.0 <= progress <= 1.0:
            raise BadConfigError(f"progress must be in [0, 1], got {progress}")
        return self.zmax_start + progress * (self.zmax_end - self.zmax_start)


@dataclass(frozen=True)
class PhotometricRanges:
    gain: tuple[float, float] = DEFAULT_GAIN_RANGE
    gamma: tuple[float, float] = DEFAULT_GAMMA_RANGE
    noise_sigma_max: float = DEFAULT_NOISE_SIGMA_MAX

    def __post_init__(self):
        if not (0 < self.gain[0] <= self.gain[1]):
            raise BadConfigError(f"bad gain range {self.gain}")
        if not (0 < self.gamma[0] <= self.gamma[1]):
            raise BadConfigError(f"bad gamma range {self.gamma}")
        if self.noise_sigma_max < 0:
            raise BadConfigError(f"noise_sigma_max must be >= 0")


@dataclass(frozen=True)
class GeometricRanges:
    rotation_max_deg: float = 0.0
    translation_max: float = 0.0   # px, per axis
    hflip: bool = True
    vflip: bool = True
    relative_rotation_max_deg: float = 0.0
    relative_translation_max: float = 0.0

    def __post_init__(self):
        for name in (
            "rotation_max_deg",
            "translation_max",
            "relative_rotation_max_deg",
            "relative_translation_max",
        ):
            if getattr(self, name) < 0:
                raise BadConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class AugmentationConfig:
    """All augmentation ranges of one training stage."""

    zoom: ZoomSchedule = ZoomSchedule()
    photometric: PhotometricRanges = PhotometricRanges()
    geometric: GeometricRanges = GeometricRanges()
    use_noise: bool = True


def sample_params(
    config: AugmentationConfig, schedule_progress: float, rng: np.random.Generator
) -> AugmentationParams:
    """Draw one AugmentationParams from the configured ranges.

    Draw order is fixed: zoom, rotation, translation x/y, flips (only
    when enabled, Bernoulli 1/2), relative perturbation (only when its
    ranges are nonzero), the three channel gains, gamma, noise sigma
    (only when noise is enabled; otherwise forced to 0 with no draw).
    """
    zmax = config.zoom.zmax_at(schedule_progress)
    zoom = float(rng.uniform(config.zoom.zmin, zmax))
    geo = config.geometric
    rotation = math.radians(float(rng.uniform(-geo.rotation_max_deg, geo.rotation_max_deg)))
    tx = float(rng.uniform(-geo.translation_max, geo.translation_max))
    ty = float(rng.uniform(-geo.translation_max, geo.translation_max))
    hflip = bool(rng.integers(2)) if geo.hflip else False
    vflip = bool(rng.integers(2)) if geo.vflip else False
    relative = None
    if geo.relative_rotation_max_deg > 0 or geo.relative_translation_max > 0:
        rel_rot = math.radians(
            float(rng.uniform(-geo.relative_rotation_max_deg, geo.relative_rotation_max_deg))
        )
        rel_tx = float(rng.uniform(-geo.relative_translation_max, geo.relative_translation_max))
        rel_ty = float(rng.uniform(-geo.relative_translation_max, geo.relative_translation_max))
        relative = RelativeAffine(rel_rot, (rel_tx, rel_ty))
    pho = config.photometric
    gains = tuple(float(rng.uniform(pho.gain[0], pho.gain[1])) for _ in range(3))
    gamma = float(rng.uniform(pho.gamma[0], pho.gamma[1]))
    noise_sigma = float(rng.uniform(0.0, pho.noise_sigma_max)) if config.use_noise else 0.0
    return AugmentationParams(
        zoom=zoom,
        rotation=rotation,
        translation=(tx, ty),
        hflip=hflip,
        vflip=vflip,
        relative=relative,
        color_gain=gains,
        gamma=gamma,
        noise_sigma=noise_sigma,
    )


def regularization_flags(stage) -> tuple[bool, bool]:
    """(use_noise, use_weight_decay) of a stage config.

    use_noise False forces noise_sigma to 0 in every sampled params for
    that stage; use_weight_decay is exported metadata for an external
    trainer, nothing in this package consumes it.
    """
    return bool(stage.use_noise), bool(stage.use_weight_decay)


# ----------------------------------------------------------------------------
# photometric
# ----------------------------------------------------------------------------

def _photometric_one(
    data: np.ndarray,
    gains: tuple[float, float, float],
    gamma: float,
    sigma: float,
    rng: np.random.Generator,
) -> ImageRaster:
    arr = np.asarray(data, dtype=np.float64)
    gain = np.asarray(gains, dtype=np.float64).reshape(1, 1, 3) if arr.ndim == 3 else gains[0]
    out = (arr * gain) ** gamma
    if sigma > 0:
        out = out + rng.normal(0.0, sigma, out.shape)
    return ImageRaster(np.clip(out, 0.0, 1.0))


def apply_photometric(
    frame1: ImageRaster,
    frame2: ImageRaster,
    params: AugmentationParams,
    rng: np.random.Generator,
) -> tuple[ImageRaster, ImageRaster]:
    """Apply the sampled color transform to both frames.

    Gain and gamma are shared by the pair; noise is independent per
    frame (frame 1 drawn first). Flow and masks are untouched by
    photometric changes.
    """
    if params.photometric_identity:
        return frame1, frame2
    out1 = _photometric_one(frame1.data, params.color_gain, params.gamma, params.noise_sigma, rng)
    out2 = _photometric_one(frame2.data, params.color_gain, params.gamma, params.noise_sigma, rng)
    return out1, out2


# ----------------------------------------------------------------------------
# geometric
# ----------------------------------------------------------------------------

def _affine_about_center(
    zoom: float, rotation: float, translation: tuple[float, float], center: tuple[float, float]
) -> np.ndarray:
    cx, cy = center
    tx, ty = translation
    cos = zoom * math.cos(rotation)
    sin = zoom * math.sin(rotation)
    # p' = R z (p - c) + c + t
    return np.array(
        [
            [cos, -sin, cx + tx - cos * cx + sin * cy],
            [sin, cos, cy + ty - sin * cx - cos * cy],
            [0.0, 0.0, 1.0],
        ]
    )


def _checked_inverse(A: np.ndarray) -> np.ndarray:
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-12:
        raise SingularTransformError(f"affine determinant {det} is not invertible")
    return np.linalg.inv(A)


def _apply_affine(A: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    return (
        A[0, 0] * xs + A[0, 1] * ys + A[0, 2],
        A[1, 0] * xs + A[1, 1] * ys + A[1, 2],
    )


def _flip_array(arr: np.ndarray, hflip: bool, vflip: bool) -> np.ndarray:
    if hflip:
        arr = arr[:, ::-1]
    if vflip:
        arr = arr[::-1]
    return np.ascontiguousarray(arr)


def _flip_sample(sample: FlowSample, hflip: bool, vflip: bool) -> FlowSample:
    if not hflip and not vflip:
        return sample
    u = _flip_array(sample.flow.u, hflip, vflip)
    v = _flip_array(sample.flow.v, hflip, vflip)
    if hflip:
        u = -u
    if vflip:
        v = -v
    return FlowSample(
        frame1=ImageRaster(_flip_array(sample.frame1.data, hflip, vflip)),
        frame2=ImageRaster(_flip_array(sample.frame2.data, hflip, vflip)),
        flow=FlowField(u, v, _flip_array(sample.flow.valid, hflip, vflip)),
        occlusion=(
            OcclusionMap(_flip_array(sample.occlusion.occluded, hflip, vflip))
            if sample.occlusion is not None
            else None
        ),
    )


def apply_geometric(sample: FlowSample, params: AugmentationParams) -> FlowSample:
    """Resample the pair under the sampled affine maps and fix up the flow.

    With identity parameters the sample passes through bit-exact. Pixels
    whose frame-1 source coordinate leaves the raster become invalid;
    validity is also gated by a nearest-neighbor lookup of the source
    mask, and flow values at invalid targets are zeroed.
    """
    if params.geometric_identity:
        return _flip_sample(sample, params.hflip, params.vflip)

    H, W = sample.height, sample.width
    center = ((W - 1) / 2.0, (H - 1) / 2.0)
    A1 = _affine_about_center(params.zoom, params.rotation, params.translation, center)
    if params.relative is not None:
        R = _affine_about_center(
            1.0, params.relative.rotation, params.relative.translation, center
        )
        A2 = A1 @ R
    else:
        A2 = A1
    A1_inv = _checked_inverse(A1)
    A2_inv = _checked_inverse(A2)

    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    p1x, p1y = _apply_affine(A1_inv, xs, ys)
    p2x, p2y = _apply_affine(A2_inv, xs, ys)

    aug1, inb1 = bilinear_sample(sample.frame1.data, p1x, p1y)
    aug2, _ = bilinear_sample(sample.frame2.data, p2x, p2y)

    fu, _ = bilinear_sample(np.asarray(sample.flow.u, np.float64), p1x, p1y)
    fv, _ = bilinear_sample(np.asarray(sample.flow.v, np.float64), p1x, p1y)
    qx, qy = _apply_affine(A2, p1x + fu, p1y + fv)
    new_u = qx - xs
    new_v = qy - ys

    nx = np.clip(np.rint(p1x).astype(np.int64), 0, W - 1)
    ny = np.clip(np.rint(p1y).astype(np.int64), 0, H - 1)
    new_valid = inb1 & sample.flow.valid[ny, nx]
    new_u[~new_valid] = 0.0
    new_v[~new_valid] = 0.0

    occlusion = None
    if sample.occlusion is not None:
        occlusion = OcclusionMap(inb1 & sample.occlusion.occluded[ny, nx])

    out = FlowSample(
        frame1=ImageRaster(np.clip(aug1, 0.0, 1.0)),
        frame2=ImageRaster(np.clip(aug2, 0.0, 1.0)),
        flow=FlowField(new_u, new_v, new_valid),
        occlusion=occlusion,
    )
    return _flip_sample(out, params.hflip, params.vflip)


def apply_augmentation(
    sample: FlowSample, params: AugmentationParams, rng: np.random.Generator
) -> FlowSample:
    """Photometric then geometric, the order used by the batch pipeline."""
    frame1, frame2 = apply_photometric(sample.frame1, sample.frame2, params, rng)
    recolored = replace(sample, frame1=frame1, frame2=frame2)
    return apply_geometric(recolored, params)
