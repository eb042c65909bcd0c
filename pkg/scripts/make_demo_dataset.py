#!/usr/bin/env python3
"""Generate a small synthetic dataset the CLI commands can run against.

Writes frame pairs, .flo ground truth and occlusion maps in the
images/flow/occlusions layout, plus a ready-to-run protocol YAML whose
single stage points at the dataset.

Example:
    python scripts/make_demo_dataset.py --out demo_data --pairs 4 --size 96x128
    scopeflow augment --config demo_data/demo_protocol.yaml --stage demo \
        --count 8 --seed 7 --out demo_out
"""

import argparse
from pathlib import Path

import yaml

from scopeflow import flowio, synthetic


def parse_size(text):
    h, w = (int(s) for s in text.lower().split("x"))
    return h, w


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--pairs", type=int, default=4)
    parser.add_argument("--size", type=parse_size, default=(96, 128), metavar="HxW")
    parser.add_argument("--max-speed", type=float, default=4.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.out)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "flow").mkdir(exist_ok=True)
    (root / "occlusions").mkdir(exist_ok=True)

    H, W = args.size
    for i in range(args.pairs):
        sample = synthetic.warped_pair(
            H, W, seed=args.seed + i, max_speed=args.max_speed, with_occlusion=True
        )
        a, b = 2 * i + 1, 2 * i + 2
        flowio.write_image(root / "images" / f"frame_{a:04d}.png", sample.frame1)
        flowio.write_image(root / "images" / f"frame_{b:04d}.png", sample.frame2)
        flowio.write_flo_file(root / "flow" / f"frame_{a:04d}.flo", sample.flow)
        flowio.write_occlusion_png(root / "occlusions" / f"frame_{a:04d}.png", sample.occlusion)

    protocol = {
        "seed": args.seed,
        "stages": [
            {
                "name": "demo",
                "dataset": {"path": str(root), "format": "flo"},
                "lr_schedule": "S_ft",
                "epochs": 8,
                "batch_size": 2,
                "crop": {"kind": "range", "min": 0.9, "max": 1.0},
                "zoom": {"min": 0.9, "max_start": 1.3, "max_end": 1.1},
                "photometric": {"gain": [0.9, 1.1], "gamma": [0.9, 1.1], "noise_sigma_max": 0.01},
                "geometric": {
                    "rotation_max_deg": 5.0,
                    "translation_max": 3.0,
                    "hflip": True,
                    "vflip": True,
                },
                "noise": True,
                "weight_decay": True,
            }
        ],
    }
    config_path = root / "demo_protocol.yaml"
    config_path.write_text(yaml.safe_dump(protocol, sort_keys=False))
    print(f"wrote {args.pairs} pairs of {H}x{W} frames under {root}")
    print(f"wrote {config_path}")


if __name__ == "__main__":
    main()
