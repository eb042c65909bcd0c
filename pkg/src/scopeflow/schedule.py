"""Multi-stage training-protocol configuration.

A protocol is an ordered list of stages (pretrain, intermediate
finetunes, final finetune), each carrying a dataset pointer, a crop
strategy, a zoom schedule, photometric/geometric ranges and the two
regularization flags. Documents are YAML; the same schema is shipped as
``schema/protocol.schema.json`` for external validators.

Learning-rate schedules are carried as names (or custom epoch lists)
only. This package performs no optimization, so their numerics are
deliberately not modeled; an external trainer consumes them together
with the batch plans emitted here.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .augmentation import (
    AugmentationConfig,
    GeometricRanges,
    PhotometricRanges,
    ZoomSchedule,
)
from .errors import (
    BadConfigError,
    EpochOutOfRangeError,
    InvalidStrategyError,
    SchemaError,
    UnknownStageError,
    ValidationError,
)
from .rng import spawn_seeds
from .scoping import ScopeStrategy, choose_crop_size, strategy_from_config, strategy_to_config

LR_SCHEDULE_NAMES = ("S_short", "S_short_half", "S_ft")
DATASET_FORMATS = ("flo", "kitti_png")


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    format: str = "flo"


@dataclass(frozen=True)
class StageConfig:
    """One phase of the training curriculum."""

    name: str
    dataset: DatasetConfig
    epochs: int
    batch_size: int
    strategy: ScopeStrategy
    zoom: ZoomSchedule
    photometric: PhotometricRanges
    geometric: GeometricRanges
    use_noise: bool
    use_weight_decay: bool
    lr_schedule: str | tuple[int, ...]
    resume_from: str | None

    def augmentation_config(self) -> AugmentationConfig:
        """Ranges for sample_params; the noise flag gates the sigma draw."""
        return AugmentationConfig(
            zoom=self.zoom,
            photometric=self.photometric,
            geometric=self.geometric,
            use_noise=self.use_noise,
        )


@dataclass(frozen=True)
class Protocol:
    seed: int
    stages: tuple[StageConfig, ...]

    def stage(self, name: str) -> StageConfig:
        for s in self.stages:
            if s.name == name:
                return s
        raise UnknownStageError(f"no stage named {name!r}")

    def stage_index(self, name: str) -> int:
        for i, s in enumerate(self.stages):
            if s.name == name:
                return i
        raise UnknownStageError(f"no stage named {name!r}")


# ----------------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------------

def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"expected a mapping, got {type(value).__name__}", path)
    return value


def _check_keys(mapping: dict, allowed: set[str], path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise SchemaError(f"unknown key {key!r}", path)


def _get(mapping: dict, key: str, path: str, kind, default=None, required=False):
    if key not in mapping:
        if required:
            raise SchemaError(f"missing required key {key!r}", path)
        return default
    value = mapping[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{key!r} must be a number, got {type(value).__name__}", path)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{key!r} must be an integer, got {type(value).__name__}", path)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise SchemaError(f"{key!r} must be a boolean, got {type(value).__name__}", path)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise SchemaError(f"{key!r} must be a string, got {type(value).__name__}", path)
        return value
    raise AssertionError(f"unsupported kind {kind}")


def _parse_pair(value, key: str, path: str, default: tuple[float, float]) -> tuple[float, float]:
    if value is None:
        return default
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise SchemaError(f"{key!r} must be a [low, high] number pair", path)
    return float(value[0]), float(value[1])


def _parse_zoom(value, path: str) -> ZoomSchedule:
    if value is None:
        return ZoomSchedule(1.0, 1.0, 1.0)
    mapping = _require_mapping(value, path)
    _check_keys(mapping, {"min", "max_start", "max_end"}, path)
    zmin = _get(mapping, "min", path, float, default=1.0)
    zmax_start = _get(mapping, "max_start", path, float, default=1.0)
    zmax_end = _get(mapping, "max_end", path, float, default=zmax_start)
    try:
        return ZoomSchedule(zmin=zmin, zmax_start=zmax_start, zmax_end=zmax_end)
    except BadConfigError as exc:
        raise ValidationError(str(exc), path) from exc


def _parse_photometric(value, path: str) -> PhotometricRanges:
    if value is None:
        return PhotometricRanges()
    mapping = _require_mapping(value, path)
    _check_keys(mapping, {"gain", "gamma", "noise_sigma_max"}, path)
    try:
        return PhotometricRanges(
            gain=_parse_pair(mapping.get("gain"), "gain", path, PhotometricRanges().gain),
            gamma=_parse_pair(mapping.get("gamma"), "gamma", path, PhotometricRanges().gamma),
            noise_sigma_max=_get(
                mapping, "noise_sigma_max", path, float, default=PhotometricRanges().noise_sigma_max
            ),
        )
    except BadConfigError as exc:
        raise ValidationError(str(exc), path) from exc


def _parse_geometric(value, path: str) -> GeometricRanges:
    if value is None:
        return GeometricRanges()
    mapping = _require_mapping(value, path)
    _check_keys(
        mapping,
        {"rotation_max_deg", "translation_max", "hflip", "vflip", "relative"},
        path,
    )
    rel_rot, rel_trans = 0.0, 0.0
    rel = mapping.get("relative")
    if rel is not None:
        rel_map = _require_mapping(rel, f"{path}.relative")
        _check_keys(rel_map, {"rotation_max_deg", "translation_max"}, f"{path}.relative")
        rel_rot = _get(rel_map, "rotation_max_deg", f"{path}.relative", float, default=0.0)
        rel_trans = _get(rel_map, "translation_max", f"{path}.relative", float, default=0.0)
    try:
        return GeometricRanges(
            rotation_max_deg=_get(mapping, "rotation_max_deg", path, float, default=0.0),
            translation_max=_get(mapping, "translation_max", path, float, default=0.0),
            hflip=_get(mapping, "hflip", path, bool, default=True),
            vflip=_get(mapping, "vflip", path, bool, default=True),
            relative_rotation_max_deg=rel_rot,
            relative_translation_max=rel_trans,
        )
    except BadConfigError as exc:
        raise ValidationError(str(exc), path) from exc


_CROP_KEYS = {
    "fixed": {"kind", "h", "w"},
    "max": {"kind"},
    "set": {"kind", "ratios"},
    "range": {"kind", "min", "max"},
}


def _parse_crop(value, path: str) -> ScopeStrategy:
    if value is None:
        return strategy_from_config({"kind": "max"})
    mapping = _require_mapping(value, path)
    kind = _get(mapping, "kind", path, str, required=True)
    if kind not in _CROP_KEYS:
        raise SchemaError(f"unknown crop kind {kind!r}", path)
    _check_keys(mapping, _CROP_KEYS[kind], path)
    if kind == "fixed":
        _get(mapping, "h", path, int, required=True)
        _get(mapping, "w", path, int, required=True)
    if kind == "set" and not isinstance(mapping.get("ratios"), (list, tuple)):
        raise SchemaError("'ratios' must be a list of [rh, rw] pairs", path)
    if kind == "range":
        _get(mapping, "min", path, float, required=True)
        _get(mapping, "max", path, float, required=True)
    try:
        return strategy_from_config(mapping)
    except InvalidStrategyError as exc:
        raise ValidationError(str(exc), path) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed crop config: {exc}", path) from exc


def _parse_lr_schedule(value, path: str):
    if value is None:
        return "S_short"
    if isinstance(value, str):
        if value not in LR_SCHEDULE_NAMES:
            raise ValidationError(
                f"lr_schedule must be one of {LR_SCHEDULE_NAMES} or an epoch list", path
            )
        return value
    if isinstance(value, (list, tuple)):
        if not value or any(isinstance(e, bool) or not isinstance(e, int) for e in value):
            raise SchemaError("custom lr_schedule must be a non-empty list of integers", path)
        return tuple(value)
    raise SchemaError(f"lr_schedule must be a name or a list, got {type(value).__name__}", path)


_STAGE_KEYS = {
    "name",
    "dataset",
    "lr_schedule",
    "epochs",
    "batch_size",
    "crop",
    "zoom",
    "photometric",
    "geometric",
    "noise",
    "weight_decay",
    "resume_from",
}


def _parse_stage(value, path: str) -> StageConfig:
    mapping = _require_mapping(value, path)
    _check_keys(mapping, _STAGE_KEYS, path)
    name = _get(mapping, "name", path, str, required=True)

    if "dataset" not in mapping:
        raise SchemaError("missing required key 'dataset'", path)
    dataset_map = _require_mapping(mapping["dataset"], f"{path}.dataset")
    _check_keys(dataset_map, {"path", "format"}, f"{path}.dataset")
    fmt = _get(dataset_map, "format", f"{path}.dataset", str, default="flo")
    if fmt not in DATASET_FORMATS:
        raise ValidationError(f"format must be one of {DATASET_FORMATS}", f"{path}.dataset")
    dataset = DatasetConfig(
        path=_get(dataset_map, "path", f"{path}.dataset", str, required=True), format=fmt
    )

    epochs = _get(mapping, "epochs", path, int, required=True)
    if epochs <= 0:
        raise ValidationError(f"epochs must be positive, got {epochs}", f"{path}.epochs")
    batch_size = _get(mapping, "batch_size", path, int, default=4)
    if batch_size <= 0:
        raise ValidationError(
            f"batch_size must be positive, got {batch_size}", f"{path}.batch_size"
        )

    resume_from = mapping.get("resume_from")
    if resume_from is not None and not isinstance(resume_from, str):
        raise SchemaError("resume_from must be a stage name or null", f"{path}.resume_from")

    return StageConfig(
        name=name,
        dataset=dataset,
        epochs=epochs,
        batch_size=batch_size,
        strategy=_parse_crop(mapping.get("crop"), f"{path}.crop"),
        zoom=_parse_zoom(mapping.get("zoom"), f"{path}.zoom"),
        photometric=_parse_photometric(mapping.get("photometric"), f"{path}.photometric"),
        geometric=_parse_geometric(mapping.get("geometric"), f"{path}.geometric"),
        use_noise=_get(mapping, "noise", path, bool, default=True),
        use_weight_decay=_get(mapping, "weight_decay", path, bool, default=True),
        lr_schedule=_parse_lr_schedule(mapping.get("lr_schedule"), f"{path}.lr_schedule"),
        resume_from=resume_from,
    )


def parse_protocol(text: str) -> Protocol:
    """Parse and validate a YAML protocol document.

    SchemaError flags structural problems (unknown key, wrong type, bad
    YAML) with field or line context; ValidationError flags invariant
    breaches (empty stage list, bad ranges, dangling resume_from).
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else None
        raise SchemaError(f"invalid YAML: {exc}", where) from exc
    if doc is None:
        raise SchemaError("empty document")
    mapping = _require_mapping(doc, "document")
    _check_keys(mapping, {"seed", "stages"}, "document")
    seed = _get(mapping, "seed", "document", int, default=0)

    raw_stages = mapping.get("stages")
    if raw_stages is None or raw_stages == []:
        raise ValidationError("protocol must declare at least one stage", "stages")
    if not isinstance(raw_stages, list):
        raise SchemaError("'stages' must be a list", "stages")

    stages = tuple(
        _parse_stage(raw, f"stages[{i}]") for i, raw in enumerate(raw_stages)
    )

    seen: dict[str, int] = {}
    for i, s in enumerate(stages):
        if s.name in seen:
            raise ValidationError(f"duplicate stage name {s.name!r}", f"stages[{i}].name")
        seen[s.name] = i
    for i, s in enumerate(stages):
        if s.resume_from is None:
            continue
        if s.resume_from not in seen:
            raise ValidationError(
                f"resume_from references unknown stage {s.resume_from!r}",
                f"stages[{i}].resume_from",
            )
        if seen[s.resume_from] >= i:
            raise ValidationError(
                f"resume_from must reference an earlier stage, "
                f"{s.resume_from!r} is not before {s.name!r}",
                f"stages[{i}].resume_from",
            )
    return Protocol(seed=seed, stages=stages)


def load_protocol(path) -> Protocol:
    return parse_protocol(Path(path).read_text())


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------

def _stage_to_dict(s: StageConfig) -> dict:
    geometric: dict = {
        "rotation_max_deg": s.geometric.rotation_max_deg,
        "translation_max": s.geometric.translation_max,
        "hflip": s.geometric.hflip,
        "vflip": s.geometric.vflip,
        "relative": None,
    }
    if s.geometric.relative_rotation_max_deg > 0 or s.geometric.relative_translation_max > 0:
        geometric["relative"] = {
            "rotation_max_deg": s.geometric.relative_rotation_max_deg,
            "translation_max": s.geometric.relative_translation_max,
        }
    return {
        "name": s.name,
        "dataset": {"path": s.dataset.path, "format": s.dataset.format},
        "lr_schedule": list(s.lr_schedule) if isinstance(s.lr_schedule, tuple) else s.lr_schedule,
        "epochs": s.epochs,
        "batch_size": s.batch_size,
        "crop": strategy_to_config(s.strategy),
        "zoom": {
            "min": s.zoom.zmin,
            "max_start": s.zoom.zmax_start,
            "max_end": s.zoom.zmax_end,
        },
        "photometric": {
            "gain": list(s.photometric.gain),
            "gamma": list(s.photometric.gamma),
            "noise_sigma_max": s.photometric.noise_sigma_max,
        },
        "geometric": geometric,
        "noise": s.use_noise,
        "weight_decay": s.use_weight_decay,
        "resume_from": s.resume_from,
    }


def serialize_protocol(p: Protocol) -> str:
    doc = {"seed": p.seed, "stages": [_stage_to_dict(s) for s in p.stages]}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


# ----------------------------------------------------------------------------
# batch plans
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchDirective:
    """Everything an external trainer needs to rebuild one batch."""

    index: int
    crop_h: int
    crop_w: int
    placement_seeds: tuple[int, ...]
    augment_seeds: tuple[int, ...]


@dataclass(frozen=True)
class BatchPlan:
    stage: str
    epoch: int
    progress: float
    image_size: tuple[int, int]
    batch_size: int
    directives: tuple[BatchDirective, ...]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def emit_batch_plan(
    protocol: Protocol,
    stage_name: str,
    epoch: int,
    rng: np.random.Generator,
    *,
    image_size: tuple[int, int],
    num_batches: int,
) -> BatchPlan:
    """Emit a reproducible plan for one epoch of one stage.

    ``image_size`` is the batch-max valid size: for mixed-resolution
    batches, the element-wise minimum over the batch members. The zoom
    schedule progress of the plan is ``epoch / stage.epochs``. The same
    (protocol, stage, epoch, seed) always yields byte-identical JSON.
    """
    stage = protocol.stage(stage_name)
    if not 0 <= epoch < stage.epochs:
        raise EpochOutOfRangeError(
            f"epoch {epoch} outside [0, {stage.epochs}) of stage {stage_name!r}"
        )
    H, W = int(image_size[0]), int(image_size[1])
    progress = epoch / stage.epochs
    directives = []
    for i in range(num_batches):
        h, w = choose_crop_size(stage.strategy, H, W, rng)
        placement_seeds = spawn_seeds(rng, stage.batch_size)
        augment_seeds = spawn_seeds(rng, stage.batch_size)
        directives.append(
            BatchDirective(
                index=i,
                crop_h=h,
                crop_w=w,
                placement_seeds=placement_seeds,
                augment_seeds=augment_seeds,
            )
        )
    return BatchPlan(
        stage=stage_name,
        epoch=epoch,
        progress=progress,
        image_size=(H, W),
        batch_size=stage.batch_size,
        directives=tuple(directives),
    )


# ----------------------------------------------------------------------------
# shipped presets
# ----------------------------------------------------------------------------

def preset_dir() -> Path:
    return Path(str(resources.files("scopeflow") / "presets"))


def list_presets() -> list[str]:
    return sorted(p.stem for p in preset_dir().glob("*.yaml"))


def load_preset(name: str) -> Protocol:
    path = preset_dir() / f"{name}.yaml"
    if not path.exists():
        raise UnknownStageError(f"no preset named {name!r}; have {list_presets()}")
    return parse_protocol(path.read_text())
