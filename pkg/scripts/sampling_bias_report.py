#!/usr/bin/env python3
"""Sampling-bias report for a given image geometry.

Per crop ratio: the full coverage probability map (16-bit PGM + CSV) and
the corner probability / always-covered block. On top of that, the
fast/slow sampling-mass ratio curve for a synthetic scene whose fast
pixels hug the borders, which is the configuration where fixed-crop
sampling bias hits hardest. Writes a PNG figure if matplotlib is
importable.

Example:
    python scripts/sampling_bias_report.py --image 436x1024 \
        --ratios 0.5,0.7,0.9,1.0 --out bias_report
"""

import argparse
import json
from pathlib import Path

from scopeflow import sampling, scoping, synthetic
from scopeflow.cli import write_csv, write_json, write_pgm16


def parse_size(text):
    h, w = (int(s) for s in text.lower().split("x"))
    return h, w


def parse_ratios(text):
    return tuple(float(s) for s in text.split(","))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image", type=parse_size, default=(436, 1024), metavar="HxW")
    parser.add_argument(
        "--ratios", type=parse_ratios, default=(0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0)
    )
    parser.add_argument("--border", type=int, default=10, help="fast border width, px")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    H, W = args.image
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    for r in args.ratios:
        g = sampling.Geometry2D(H, W, scoping.ratio_to_size(r, H), scoping.ratio_to_size(r, W))
        pmap = sampling.probability_map(g)
        stem = f"prob_r{r:g}"
        write_pgm16(out / f"{stem}.pgm", pmap)
        write_csv(out / f"{stem}.csv", pmap)
        corner = sampling.prob_2d(0, 0, g)
        entries.append(
            {
                "ratio": r,
                "crop": [g.h, g.w],
                "corner_probability": float(corner),
                "corner_probability_fraction": f"{corner.numerator}/{corner.denominator}",
                "always_covered_region": list(sampling.always_covered_region(g)),
            }
        )

    flow = synthetic.border_speed_flow(H, W, border=args.border)
    curve = []
    for r in args.ratios:
        g = sampling.Geometry2D(H, W, scoping.ratio_to_size(r, H), scoping.ratio_to_size(r, W))
        res = sampling.category_sampling_ratio(flow, g)
        curve.append((r, res.fast_mass, res.slow_mass, res.ratio))
    write_csv(out / "ratio_curve.csv", curve, header="crop_ratio,fast_mass,slow_mass,ratio")
    write_json(out / "report.json", {"image": [H, W], "maps": entries})

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(1, 2, figsize=(11, 4))
        smallest = min(args.ratios)
        g = sampling.Geometry2D(
            H, W, scoping.ratio_to_size(smallest, H), scoping.ratio_to_size(smallest, W)
        )
        im = axes[0].imshow(sampling.probability_map(g), vmin=0, vmax=1, cmap="viridis")
        axes[0].set_title(f"coverage probability, crop ratio {smallest:g}")
        fig.colorbar(im, ax=axes[0], shrink=0.8)
        axes[1].plot([c[0] for c in curve], [c[3] for c in curve], marker="o")
        axes[1].axhline(1.0, color="gray", lw=0.8)
        axes[1].set_xlabel("crop ratio per axis")
        axes[1].set_ylabel("fast mass / slow mass")
        axes[1].set_title(f"category sampling ratio ({args.border}px fast border)")
        fig.tight_layout()
        fig.savefig(out / "report.png", dpi=130)
        print(f"wrote {out / 'report.png'}")
    except ImportError:
        print("matplotlib not importable, skipping the PNG figure")

    print(json.dumps(entries, indent=2))


if __name__ == "__main__":
    main()
