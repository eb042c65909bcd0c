"""Shared fixtures: synthetic on-disk datasets and stage configs."""

import numpy as np
import pytest
import yaml

from scopeflow import flowio, synthetic


def build_dataset(
    root, n_pairs=3, size=(48, 64), max_speed=3.0, with_occlusions=True, flow_format="flo"
):
    """Write a small synthetic dataset in the images/flow/occlusions layout."""
    (root / "images").mkdir(parents=True)
    (root / "flow").mkdir()
    if with_occlusions:
        (root / "occlusions").mkdir()
    H, W = size
    for i in range(n_pairs):
        sample = synthetic.warped_pair(
            H, W, seed=100 + i, max_speed=max_speed, with_occlusion=with_occlusions
        )
        # consecutive numbering so frame k pairs with frame k+1
        a, b = 2 * i + 1, 2 * i + 2
        flowio.write_image(root / "images" / f"frame_{a:04d}.png", sample.frame1)
        flowio.write_image(root / "images" / f"frame_{b:04d}.png", sample.frame2)
        if flow_format == "flo":
            flowio.write_flo_file(root / "flow" / f"frame_{a:04d}.flo", sample.flow)
        else:
            # punch a sparse hole so KITTI-style validity is exercised
            valid = np.ones((H, W), bool)
            valid[H // 3 : H // 2, W // 3 : W // 2] = False
            sparse = flowio.FlowField(
                np.where(valid, sample.flow.u, 0.0), np.where(valid, sample.flow.v, 0.0), valid
            )
            flowio.write_kitti_png(root / "flow" / f"frame_{a:04d}.png", sparse)
        if with_occlusions:
            flowio.write_occlusion_png(
                root / "occlusions" / f"frame_{a:04d}.png", sample.occlusion
            )
    return root


def stage_yaml(data_root, **overrides):
    """A one-stage protocol document pointing at ``data_root``."""
    stage = {
        "name": "demo",
        "dataset": {"path": str(data_root), "format": "flo"},
        "epochs": 4,
        "batch_size": 2,
        "crop": {"kind": "range", "min": 0.8, "max": 1.0},
        "zoom": {"min": 0.9, "max_start": 1.2, "max_end": 1.1},
        "photometric": {"gain": [0.9, 1.1], "gamma": [0.9, 1.1], "noise_sigma_max": 0.01},
        "geometric": {
            "rotation_max_deg": 3.0,
            "translation_max": 2.0,
            "hflip": True,
            "vflip": True,
        },
        "noise": True,
        "weight_decay": True,
    }
    stage.update(overrides)
    return yaml.safe_dump({"seed": 9, "stages": [stage]}, sort_keys=False)


@pytest.fixture
def dataset_dir(tmp_path):
    return build_dataset(tmp_path / "data")


@pytest.fixture
def demo_config(tmp_path, dataset_dir):
    path = tmp_path / "demo.yaml"
    path.write_text(stage_yaml(dataset_dir))
    return path
