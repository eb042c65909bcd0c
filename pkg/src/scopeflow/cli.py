"""Command-line surface.

Subcommands: analyze-bias, analyze-categories, augment, eval, convert,
validate-config, show-plan. Exit codes: 0 ok, 2 usage (including
incompatible inputs), 3 I/O failure, 4 validation failure.

Every subcommand is deterministic: rerunning with the same arguments and
seed produces byte-identical outputs. The seed comes from ``--seed``,
falling back to the SCOPEFLOW_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import flowio, flowops, sampling, schedule, scoping
from .augmentation import apply_augmentation, sample_params
from .errors import (
    DimMismatchError,
    InvalidGeometryError,
    InvalidStrategyError,
    ScopeFlowError,
)
from .rng import make_rng

SEED_ENV_VAR = "SCOPEFLOW_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4


# ----------------------------------------------------------------------------
# small writers (all byte-deterministic)
# ----------------------------------------------------------------------------

def write_pgm16(path, values: np.ndarray) -> None:
    """16-bit binary PGM; input values in [0, 1] are scaled by 65535."""
    arr = np.rint(np.asarray(values, np.float64) * 65535.0).astype(">u2")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode()
    Path(path).write_bytes(header + arr.tobytes())


def write_csv(path, rows, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    for row in rows:
        lines.append(",".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(s) for s in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"extents must be positive, got {text!r}")
    return h, w


def _parse_ratios(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ratios, got {text!r}")
    for r in values:
        if not 0 < r <= 1:
            raise argparse.ArgumentTypeError(f"ratios must lie in (0, 1], got {r}")
    return values


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _parse_strategy_arg(text: str) -> scoping.ScopeStrategy:
    try:
        return scoping.parse_strategy(text)
    except InvalidStrategyError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _override_strategy(protocol, stage_name: str, strategy) -> schedule.Protocol:
    if strategy is None:
        return protocol
    protocol.stage(stage_name)  # surface UnknownStageError before rebuilding
    stages = tuple(
        dataclasses.replace(s, strategy=strategy) if s.name == stage_name else s
        for s in protocol.stages
    )
    return dataclasses.replace(protocol, stages=stages)


def _read_flow(path: Path, fmt: str) -> flowio.FlowField:
    if fmt == "auto":
        fmt = "kitti_png" if path.suffix.lower() == ".png" else "flo"
    if fmt == "kitti_png":
        return flowio.read_kitti_png(path)
    return flowio.read_flo_file(path)


# ----------------------------------------------------------------------------
# analyze-bias
# ----------------------------------------------------------------------------

def _bias_entry(g: sampling.Geometry2D, out_dir: Path) -> dict:
    pmap = sampling.probability_map(g)
    stem = f"prob_{g.h}x{g.w}"
    write_pgm16(out_dir / f"{stem}.pgm", pmap)
    write_csv(out_dir / f"{stem}.csv", pmap)
    corner = sampling.prob_2d(0, 0, g)
    region = sampling.always_covered_region(g)
    return {
        "crop": [g.h, g.w],
        "corner_probability": float(corner),
        "corner_probability_fraction": f"{corner.numerator}/{corner.denominator}",
        "always_covered_region": list(region),
        "n_placements": g.n_placements,
        "files": {"pgm": f"{stem}.pgm", "csv": f"{stem}.csv"},
    }


def _oracle_smoke_check(ratios: tuple[float, ...]) -> str:
    """Exact equality of the closed form and enumeration on 32x32 cases."""
    for r in ratios or (0.5, 0.75, 1.0):
        g = sampling.Geometry2D(32, 32, scoping.ratio_to_size(r, 32), scoping.ratio_to_size(r, 32))
        counts, total = sampling.exhaustive_count_map(g)
        for y in range(g.H):
            for x in range(g.W):
                if sampling.prob_2d(x, y, g) != Fraction(int(counts[y, x]), total):
                    return f"mismatch at ratio {r}, pixel ({x}, {y})"
    return "pass"


def cmd_analyze_bias(args) -> int:
    H, W = args.image
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.crop is not None:
            geometries = [sampling.Geometry2D(H, W, args.crop[0], args.crop[1])]
            ratios: tuple[float, ...] = ()
        else:
            ratios = args.ratios
            geometries = [
                sampling.Geometry2D(H, W, scoping.ratio_to_size(r, H), scoping.ratio_to_size(r, W))
                for r in ratios
            ]
    except InvalidGeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = {
        "image": [H, W],
        "crops": [_bias_entry(g, out_dir) for g in geometries],
    }
    if args.oracle:
        verdict = _oracle_smoke_check(ratios)
        summary["oracle_check"] = verdict
        if verdict != "pass":
            write_json(out_dir / "summary.json", summary)
            print(f"oracle check failed: {verdict}", file=sys.stderr)
            return EXIT_VALIDATION
    write_json(out_dir / "summary.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# ----------------------------------------------------------------------------
# analyze-categories
# ----------------------------------------------------------------------------

def cmd_analyze_categories(args) -> int:
    flow = _read_flow(Path(args.flow), args.flow_format)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in args.ratios:
        g = sampling.Geometry2D(
            flow.height,
            flow.width,
            scoping.ratio_to_size(r, flow.height),
            scoping.ratio_to_size(r, flow.width),
        )
        res = sampling.category_sampling_ratio(flow, g, args.slow_max, args.fast_min)
        rows.append((r, res.fast_mass, res.slow_mass, res.ratio))
    write_csv(out_dir / "ratio_curve.csv", rows, header="crop_ratio,fast_mass,slow_mass,ratio")
    summary = {
        "flow": str(args.flow),
        "slow_max": args.slow_max,
        "fast_min": args.fast_min,
        "curve": [
            {"crop_ratio": r, "fast_mass": f, "slow_mass": s, "ratio": q}
            for r, f, s, q in rows
        ],
    }
    write_json(out_dir / "summary.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# ----------------------------------------------------------------------------
# augment
# ----------------------------------------------------------------------------

def _params_to_dict(params) -> dict:
    return {
        "zoom": params.zoom,
        "rotation": params.rotation,
        "translation": list(params.translation),
        "hflip": params.hflip,
        "vflip": params.vflip,
        "relative": (
            None
            if params.relative is None
            else {
                "rotation": params.relative.rotation,
                "translation": list(params.relative.translation),
            }
        ),
        "color_gain": list(params.color_gain),
        "gamma": params.gamma,
        "noise_sigma": params.noise_sigma,
    }


def cmd_augment(args) -> int:
    protocol = _override_strategy(schedule.load_protocol(args.config), args.stage, args.crop)
    stage = protocol.stage(args.stage)
    root = Path(args.data_root) if args.data_root else Path(stage.dataset.path)
    entries = flowio.index_dataset(
        root / "images",
        root / "flow",
        root / "occlusions" if (root / "occlusions").is_dir() else None,
        flow_format=stage.dataset.format,
    )
    if not entries:
        print(f"no samples found under {root}", file=sys.stderr)
        return EXIT_IO

    used = [entries[k % len(entries)] for k in range(args.count)]
    sizes = []
    for entry in dict.fromkeys(used):
        frame = flowio.read_image(entry.frame1)
        sizes.append((frame.height, frame.width))
    image_size = scoping.max_valid_crop(sizes)

    seed = _resolve_seed(args)
    num_batches = math.ceil(args.count / stage.batch_size)
    plan = schedule.emit_batch_plan(
        protocol,
        args.stage,
        args.epoch,
        make_rng(seed),
        image_size=image_size,
        num_batches=num_batches,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    aug_cfg = stage.augmentation_config()

    written, failures = [], []
    k = 0
    for directive in plan.directives:
        for placement_seed, augment_seed in zip(
            directive.placement_seeds, directive.augment_seeds
        ):
            if k >= args.count:
                break
            entry = entries[k % len(entries)]
            stem = f"sample_{k:04d}"
            try:
                sample = flowio.load_sample(entry, stage.dataset.format)
                rng = make_rng(augment_seed)
                params = sample_params(aug_cfg, plan.progress, rng)
                aug = apply_augmentation(sample, params, rng)
                spec = scoping.place_crop(
                    directive.crop_h, directive.crop_w, aug.height, aug.width,
                    make_rng(placement_seed),
                )
                out = scoping.apply_crop(aug, spec)
                flowio.write_image(out_dir / f"{stem}_img1.png", out.frame1)
                flowio.write_image(out_dir / f"{stem}_img2.png", out.frame2)
                flowio.write_flo_file(out_dir / f"{stem}_flow.flo", out.flow)
                if out.occlusion is not None:
                    flowio.write_occlusion_png(out_dir / f"{stem}_occ.png", out.occlusion)
                write_json(
                    out_dir / f"{stem}_params.json",
                    {
                        "index": k,
                        "source": {
                            "frame1": str(entry.frame1),
                            "frame2": str(entry.frame2),
                            "flow": str(entry.flow),
                        },
                        "augment_seed": augment_seed,
                        "placement_seed": placement_seed,
                        "progress": plan.progress,
                        "params": _params_to_dict(params),
                        "crop": {"h": spec.h, "w": spec.w, "x0": spec.x0, "y0": spec.y0},
                    },
                )
                written.append(stem)
            except Exception as exc:  # per-sample failures are logged, not fatal
                print(f"{stem}: {type(exc).__name__}: {exc}", file=sys.stderr)
                failures.append({"sample": stem, "error": str(exc)})
            k += 1
    write_json(
        out_dir / "summary.json",
        {
            "stage": args.stage,
            "seed": seed,
            "epoch": args.epoch,
            "count": args.count,
            "written": written,
            "failures": failures,
            "image_size": list(image_size),
        },
    )
    return EXIT_VALIDATION if failures else EXIT_OK


# ----------------------------------------------------------------------------
# eval / convert
# ----------------------------------------------------------------------------

def cmd_eval(args) -> int:
    pred = _read_flow(Path(args.pred), args.format)
    gt = _read_flow(Path(args.gt), args.format)
    metrics = {
        "epe": flowops.epe(pred, gt),
        "outlier_rate": flowops.outlier_rate(pred, gt, args.threshold),
        "outlier_threshold": args.threshold,
    }
    if args.pred_occ and args.gt_occ:
        res = flowops.occlusion_f1(
            flowio.read_occlusion_png(args.pred_occ), flowio.read_occlusion_png(args.gt_occ)
        )
        metrics["f1"] = res.score
        metrics["f1_no_positives"] = res.no_positives
    if args.error_map:
        errors = flowops.epe_map(pred, gt)
        peak = float(errors.max())
        write_pgm16(args.error_map, errors / peak if peak > 0 else errors)
        metrics["error_map_max"] = peak
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    src_ext, dst_ext = src.suffix.lower(), dst.suffix.lower()
    if src_ext == ".flo" and dst_ext == ".png":
        flowio.write_kitti_png(dst, flowio.read_flo_file(src))
    elif src_ext == ".png" and dst_ext == ".flo":
        flowio.write_flo_file(dst, flowio.read_kitti_png(src))
    else:
        print(f"cannot convert {src_ext or '?'} to {dst_ext or '?'}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


# ----------------------------------------------------------------------------
# validate-config / show-plan
# ----------------------------------------------------------------------------

def cmd_validate_config(args) -> int:
    protocol = schedule.load_protocol(args.config)
    names = ", ".join(s.name for s in protocol.stages)
    print(f"OK: {len(protocol.stages)} stage(s): {names}")
    return EXIT_OK


def cmd_show_plan(args) -> int:
    protocol = _override_strategy(schedule.load_protocol(args.config), args.stage, args.crop)
    plan = schedule.emit_batch_plan(
        protocol,
        args.stage,
        args.epoch,
        make_rng(_resolve_seed(args)),
        image_size=args.image_size,
        num_batches=args.batches,
    )
    text = plan.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser and dispatch
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopeflow",
        description="Crop-sampling bias analysis and flow-correct augmentation tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-bias", help="per-pixel crop coverage probability maps")
    p.add_argument("--image", type=_parse_size, required=True, metavar="HxW")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--crop", type=_parse_size, metavar="HxW")
    group.add_argument("--ratios", type=_parse_ratios, metavar="R1,R2,...")
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", action="store_true", help="cross-check against enumeration")
    p.set_defaults(func=cmd_analyze_bias)

    p = sub.add_parser(
        "analyze-categories", help="fast/slow sampling-mass ratio over crop ratios"
    )
    p.add_argument("--flow", required=True)
    p.add_argument("--flow-format", choices=["flo", "kitti_png", "auto"], default="auto")
    p.add_argument("--ratios", type=_parse_ratios, default=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0))
    p.add_argument("--slow-max", type=float, default=sampling.SLOW_MAX_SPEED)
    p.add_argument("--fast-min", type=float, default=sampling.FAST_MIN_SPEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_categories)

    p = sub.add_parser("augment", help="write augmented sample pairs with param sidecars")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--data-root", default=None, help="override the stage's dataset path")
    p.add_argument(
        "--crop", type=_parse_strategy_arg, default=None, metavar="STRATEGY",
        help="override the stage's crop strategy: "
             "fixed:H,W | max | set:rh1,rw1;rh2,rw2;... | range:rmin,rmax",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="EPE / outlier rate / occlusion F1 between two flows")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=["flo", "kitti_png", "auto"], default="auto")
    p.add_argument("--pred-occ", default=None)
    p.add_argument("--gt-occ", default=None)
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--out", default=None, help="also write the metrics JSON here")
    p.add_argument("--error-map", default=None, help="write a normalized per-pixel EPE PGM")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="convert .flo <-> KITTI 16-bit PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate-config", help="parse and validate a protocol YAML")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate_config)

    p = sub.add_parser("show-plan", help="emit the deterministic batch plan of one epoch")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", required=True)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--image-size", type=_parse_size, required=True, metavar="HxW")
    p.add_argument("--batches", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--crop", type=_parse_strategy_arg, default=None, metavar="STRATEGY",
        help="override the stage's crop strategy (same syntax as augment --crop)",
    )
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_show_plan)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DimMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScopeFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
