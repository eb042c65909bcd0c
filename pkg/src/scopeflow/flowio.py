"""Readers and writers for optical flow ground truth and related rasters.

Supported formats:

* Middlebury ``.flo``: little-endian; a 4-byte float sentinel 202021.25,
  two int32 fields (width, height), then ``width * height`` interleaved
  (u, v) float32 pairs in row-major order. Components with magnitude
  above ``1e9`` mark unknown flow.
* KITTI flow PNG: 16-bit, 3 channels. ``u = (R - 2**15) / 64``,
  ``v = (G - 2**15) / 64``, valid where ``B != 0``. Invalid pixels decode
  to zero flow.
* Occlusion maps: 8-bit single-channel PNG; a pixel is occluded where its
  value exceeds a threshold (127 by default, configurable because binary
  mask conventions differ between datasets).

Every raster in this package is row-major with the origin at the top-left
corner and y growing downward. All functions here are pure; none mutate
their inputs, so concurrent calls are safe.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    BadBitDepthError,
    BadChannelCountError,
    BadDimsError,
    BadMagicError,
    DimMismatchError,
    OutOfRangeError,
    TruncatedError,
)

cv2.setNumThreads(0)

FLO_MAGIC = 202021.25
FLO_INVALID_THRESHOLD = 1e9
FLO_INVALID_SENTINEL = 1e10
KITTI_BIAS = 2**15
KITTI_SCALE = 64.0
# Largest magnitude whose quantized code still fits in uint16 on both sides
# of the bias: (2**16 - 1 - 2**15) / 64.
KITTI_MAX_ABS = 32767 / 64.0
OCCLUSION_THRESHOLD = 127


# ----------------------------------------------------------------------------
# domain types
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense per-pixel displacement raster with a validity mask.

    ``u`` and ``v`` are (H, W) float arrays holding horizontal and
    vertical displacement in pixels per frame; ``valid`` is an (H, W)
    bool array.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u)
        v = np.asarray(self.v)
        valid = np.asarray(self.valid).astype(bool)
        if u.ndim != 2:
            raise ValueError(f"flow components must be 2-D, got shape {u.shape}")
        if u.shape != v.shape or u.shape != valid.shape:
            raise ValueError(
                f"component shapes differ: u {u.shape}, v {v.shape}, valid {valid.shape}"
            )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def dense(cls, u, v) -> "FlowField":
        """Build an all-valid field from two component arrays."""
        u = np.asarray(u)
        return cls(u, np.asarray(v), np.ones(u.shape, dtype=bool))

    def speed(self) -> np.ndarray:
        """Per-pixel displacement magnitude in pixels per frame."""
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


@dataclass(frozen=True, eq=False)
class ImageRaster:
    """Intensity raster with values in [0, 1].

    ``data`` is (H, W) for grayscale or (H, W, 3) for color.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim not in (2, 3):
            raise ValueError(f"image must be 2-D or 3-D, got shape {data.shape}")
        if data.ndim == 3 and data.shape[2] != 3:
            raise BadChannelCountError(
                f"image must have 1 or 3 channels, got {data.shape[2]}"
            )
        if not np.isfinite(data).all():
            raise ValueError("image intensities must be finite")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


@dataclass(frozen=True, eq=False)
class OcclusionMap:
    """Per-pixel boolean map; True where a pixel is visible in only one frame."""

    occluded: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occluded).astype(bool)
        if occ.ndim != 2:
            raise ValueError(f"occlusion map must be 2-D, got shape {occ.shape}")
        object.__setattr__(self, "occluded", occ)

    @property
    def height(self) -> int:
        return self.occluded.shape[0]

    @property
    def width(self) -> int:
        return self.occluded.shape[1]


@dataclass(frozen=True, eq=False)
class FlowSample:
    """One training sample: a frame pair, its flow, and optional occlusions."""

    frame1: ImageRaster
    frame2: ImageRaster
    flow: FlowField
    occlusion: OcclusionMap | None = None

    def __post_init__(self):
        shape = (self.frame1.height, self.frame1.width)
        for name, obj in (("frame2", self.frame2), ("flow", self.flow)):
            if (obj.height, obj.width) != shape:
                raise DimMismatchError(
                    f"{name} is {obj.height}x{obj.width}, frame1 is {shape[0]}x{shape[1]}"
                )
        if self.occlusion is not None and (
            self.occlusion.height,
            self.occlusion.width,
        ) != shape:
            raise DimMismatchError("occlusion dimensions do not match the frames")

    @property
    def height(self) -> int:
        return self.frame1.height

    @property
    def width(self) -> int:
        return self.frame1.width


# ----------------------------------------------------------------------------
# Middlebury .flo
# ----------------------------------------------------------------------------

def read_flo(data: bytes) -> FlowField:
    """Decode a Middlebury ``.flo`` byte buffer.

    Raises BadMagicError, TruncatedError or BadDimsError on malformed
    input; never raises on any truncation of a well-formed file other
    than TruncatedError.
    """
    buf = bytes(data)
    if len(buf) < 4:
        raise TruncatedError(f"need 4 bytes for the magic, got {len(buf)}")
    (magic,) = struct.unpack_from("<f", buf, 0)
    if magic != np.float32(FLO_MAGIC):
        raise BadMagicError(f"bad sentinel {magic!r}, expected {FLO_MAGIC}")
    if len(buf) < 12:
        raise TruncatedError(f"need 12 header bytes, got {len(buf)}")
    width, height = struct.unpack_from("<ii", buf, 4)
    if width <= 0 or height <= 0:
        raise BadDimsError(f"non-positive dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(buf) < expected:
        raise TruncatedError(
            f"header promises {expected} bytes, buffer has {len(buf)}"
        )
    raw = np.frombuffer(buf, dtype="<f4", count=2 * width * height, offset=12)
    uv = raw.reshape(height, width, 2)
    u = uv[:, :, 0]
    v = uv[:, :, 1]
    valid = (np.abs(u) <= FLO_INVALID_THRESHOLD) & (np.abs(v) <= FLO_INVALID_THRESHOLD)
    return FlowField(u.copy(), v.copy(), valid)


def write_flo(flow: FlowField) -> bytes:
    """Encode a FlowField as Middlebury ``.flo`` bytes, bit-exact inverse of read_flo.

    Invalid pixels whose stored components are still inside the readable
    range are replaced by the +-1e10 sentinel; components already beyond
    the 1e9 read threshold are written unchanged so that read -> write
    round-trips are byte-identical.
    """
    u = np.ascontiguousarray(flow.u, dtype="<f4")
    v = np.ascontiguousarray(flow.v, dtype="<f4")
    needs_sentinel = ~flow.valid & (
        (np.abs(u) <= FLO_INVALID_THRESHOLD) & (np.abs(v) <= FLO_INVALID_THRESHOLD)
    )
    if needs_sentinel.any():
        u = u.copy()
        v = v.copy()
        u[needs_sentinel] = FLO_INVALID_SENTINEL
        v[needs_sentinel] = FLO_INVALID_SENTINEL
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    interleaved = np.empty((flow.height, flow.width, 2), dtype="<f4")
    interleaved[:, :, 0] = u
    interleaved[:, :, 1] = v
    return header + interleaved.tobytes()


def read_flo_file(path) -> FlowField:
    return read_flo(Path(path).read_bytes())


def write_flo_file(path, flow: FlowField) -> None:
    Path(path).write_bytes(write_flo(flow))


# ----------------------------------------------------------------------------
# KITTI 16-bit PNG
# ----------------------------------------------------------------------------

def decode_kitti_flow(pixels: np.ndarray) -> FlowField:
    """Decode a KITTI ground-truth raster (uint16, RGB channel order)."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint16:
        raise BadBitDepthError(f"expected uint16 samples, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise BadChannelCountError(f"expected 3 channels, got shape {arr.shape}")
    u = (arr[:, :, 0].astype(np.float32) - KITTI_BIAS) / KITTI_SCALE
    v = (arr[:, :, 1].astype(np.float32) - KITTI_BIAS) / KITTI_SCALE
    valid = arr[:, :, 2] != 0
    u[~valid] = 0.0
    v[~valid] = 0.0
    return FlowField(u, v, valid)


def encode_kitti_flow(flow: FlowField) -> np.ndarray:
    """Encode a FlowField as a KITTI uint16 RGB raster.

    Valid components must satisfy ``|u|, |v| <= 32767/64`` (about
    511.98 px); anything larger raises OutOfRangeError. Invalid pixels
    are written as zero flow with the valid bit cleared.
    """
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    vmask = flow.valid
    if vmask.any():
        peak = max(np.abs(u[vmask]).max(), np.abs(v[vmask]).max())
        if peak > KITTI_MAX_ABS:
            raise OutOfRangeError(
                f"|flow| up to {peak:.4f} px exceeds the encodable {KITTI_MAX_ABS:.4f} px"
            )
    out = np.zeros((flow.height, flow.width, 3), dtype=np.uint16)
    r = np.rint(u * KITTI_SCALE).astype(np.int64) + KITTI_BIAS
    g = np.rint(v * KITTI_SCALE).astype(np.int64) + KITTI_BIAS
    out[:, :, 0] = np.where(vmask, r, KITTI_BIAS).astype(np.uint16)
    out[:, :, 1] = np.where(vmask, g, KITTI_BIAS).astype(np.uint16)
    out[:, :, 2] = vmask.astype(np.uint16)
    return out


def read_kitti_png(path) -> FlowField:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FileNotFoundError(f"cannot read {path}")
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]  # cv2 loads BGR
    return decode_kitti_flow(arr)


def write_kitti_png(path, flow: FlowField) -> None:
    rgb = encode_kitti_flow(flow)
    if not cv2.imwrite(str(path), rgb[:, :, ::-1]):
        raise OSError(f"cannot write {path}")


# ----------------------------------------------------------------------------
# occlusion maps and images
# ----------------------------------------------------------------------------

def decode_occlusion(pixels: np.ndarray, threshold: int = OCCLUSION_THRESHOLD) -> OcclusionMap:
    """Threshold an 8-bit single-channel raster into an OcclusionMap."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        if arr.shape[2] != 1:
            raise BadChannelCountError(
                f"occlusion raster must be single-channel, got shape {arr.shape}"
            )
        arr = arr[:, :, 0]
    return OcclusionMap(arr > threshold)


def read_occlusion_png(path, threshold: int = OCCLUSION_THRESHOLD) -> OcclusionMap:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FileNotFoundError(f"cannot read {path}")
    return decode_occlusion(arr, threshold)


def write_occlusion_png(path, occ: OcclusionMap) -> None:
    data = np.where(occ.occluded, 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"cannot write {path}")


def read_image(path) -> ImageRaster:
    """Load an 8- or 16-bit PNG as an ImageRaster with [0, 1] intensities."""
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FileNotFoundError(f"cannot read {path}")
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            arr = arr[:, :, :3]
        arr = arr[:, :, ::-1]
    if arr.dtype == np.uint8:
        data = arr.astype(np.float32) / 255.0
    elif arr.dtype == np.uint16:
        data = arr.astype(np.float32) / 65535.0
    else:
        raise BadBitDepthError(f"unsupported sample type {arr.dtype}")
    return ImageRaster(data)


def write_image(path, image: ImageRaster) -> None:
    data = np.rint(np.asarray(image.data, dtype=np.float64) * 255.0).astype(np.uint8)
    if data.ndim == 3:
        data = data[:, :, ::-1]
    if not cv2.imwrite(str(path), data):
        raise OSError(f"cannot write {path}")


# ----------------------------------------------------------------------------
# dataset indexing
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleEntry:
    """Paths of one (frame, next frame, flow, occlusion) group."""

    frame1: Path
    frame2: Path
    flow: Path
    occlusion: Path | None = None


_FRAME_NUM_RE = re.compile(r"^(?P<prefix>.*?)(?P<num>\d+)$")


def index_dataset(
    images_dir,
    flow_dir,
    occlusions_dir=None,
    *,
    image_glob: str = "*.png",
    flow_format: str = "flo",
) -> list[SampleEntry]:
    """Scan a directory tree into (frame_N, frame_N+1, flow, occlusion) entries.

    Frames are matched by ``image_glob`` and paired when their trailing
    frame numbers are consecutive and share a name prefix. The flow (and
    optional occlusion) file for a pair carries the first frame's stem.
    Pairs without a flow file are skipped.
    """
    images_dir = Path(images_dir)
    flow_dir = Path(flow_dir)
    occlusions_dir = Path(occlusions_dir) if occlusions_dir is not None else None
    flow_ext = ".flo" if flow_format == "flo" else ".png"

    parsed = []
    for p in sorted(images_dir.glob(image_glob)):
        m = _FRAME_NUM_RE.match(p.stem)
        if m:
            parsed.append((m.group("prefix"), int(m.group("num")), p))
    parsed.sort(key=lambda t: (t[0], t[1]))

    entries = []
    for (pre1, n1, p1), (pre2, n2, _p2) in zip(parsed, parsed[1:]):
        if pre1 != pre2 or n2 != n1 + 1:
            continue
        flow_path = flow_dir / (p1.stem + flow_ext)
        if not flow_path.exists():
            continue
        occ_path = None
        if occlusions_dir is not None:
            candidate = occlusions_dir / (p1.stem + ".png")
            if candidate.exists():
                occ_path = candidate
        entries.append(SampleEntry(p1, _p2, flow_path, occ_path))
    return entries


def load_sample(entry: SampleEntry, flow_format: str = "flo") -> FlowSample:
    """Read one indexed entry into memory."""
    if flow_format == "flo":
        flow = read_flo_file(entry.flow)
    elif flow_format == "kitti_png":
        flow = read_kitti_png(entry.flow)
    else:
        raise ValueError(f"unknown flow format {flow_format!r}")
    occlusion = (
        read_occlusion_png(entry.occlusion) if entry.occlusion is not None else None
    )
    return FlowSample(
        frame1=read_image(entry.frame1),
        frame2=read_image(entry.frame2),
        flow=flow,
        occlusion=occlusion,
    )
