"""Data-side tooling for optical flow training pipelines.

Modules:

* flowio: flow / occlusion / image codecs and dataset indexing
* sampling: crop coverage probability models and category bias statistics
* scoping: crop-size strategies, placement, crop application
* augmentation: flow-correct photometric and geometric augmentation
* flowops: backward warping, cost volumes, EPE / outlier / F1 metrics
* schedule: multi-stage YAML protocols and batch-plan emission
* synthetic: analytic test scenes
* cli: the ``scopeflow`` command
"""

from . import augmentation, cli, errors, flowio, flowops, rng, sampling, schedule, scoping, synthetic
from .flowio import FlowField, FlowSample, ImageRaster, OcclusionMap
from .rng import make_rng

__version__ = "0.1.0"

__all__ = [
    "augmentation",
    "cli",
    "errors",
    "flowio",
    "flowops",
    "rng",
    "sampling",
    "schedule",
    "scoping",
    "synthetic",
    "FlowField",
    "FlowSample",
    "ImageRaster",
    "OcclusionMap",
    "make_rng",
    "__version__",
]
