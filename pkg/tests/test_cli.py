"""CLI behavior: outputs, exit codes, determinism."""

import json

import numpy as np
import pytest

from scopeflow import flowio
from scopeflow.cli import main, write_pgm16
from tests.conftest import build_dataset, stage_yaml


def read_tree(root):
    """Map of relative path -> file bytes for a whole directory."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def write_constant_flo(path, h, w, u, v):
    field = flowio.FlowField.dense(np.full((h, w), float(u)), np.full((h, w), float(v)))
    flowio.write_flo_file(path, field)
    return field


class TestAnalyzeBias:
    def test_worked_example_summary(self, tmp_path, capsys):
        out = tmp_path / "bias"
        code = main(
            ["analyze-bias", "--image", "436x1024", "--crop", "384x768", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        entry = summary["crops"][0]
        assert entry["corner_probability"] == pytest.approx(7.342e-5, abs=5e-9)
        assert entry["corner_probability_fraction"] == "1/13621"
        assert entry["always_covered_region"] == [332, 512]
        assert (out / "prob_384x768.pgm").exists()
        assert (out / "prob_384x768.csv").exists()

    def test_full_ratio_is_all_ones_pgm(self, tmp_path):
        out = tmp_path / "bias"
        assert main(["analyze-bias", "--image", "8x10", "--ratios", "1.0", "--out", str(out)]) == 0
        data = (out / "prob_8x10.pgm").read_bytes()
        header = b"P5\n10 8\n65535\n"
        assert data.startswith(header)
        values = np.frombuffer(data[len(header):], dtype=">u2")
        assert (values == 65535).all()

    def test_oracle_flag(self, tmp_path):
        out = tmp_path / "bias"
        code = main(
            ["analyze-bias", "--image", "64x64", "--ratios", "0.5,0.9", "--out", str(out), "--oracle"]
        )
        assert code == 0
        assert json.loads((out / "summary.json").read_text())["oracle_check"] == "pass"

    def test_determinism(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["analyze-bias", "--image", "30x40", "--ratios", "0.5,0.7,0.9", "--out", str(out)])
            outs.append(read_tree(out))
        assert outs[0] == outs[1]

    def test_usage_error_on_bad_size(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze-bias", "--image", "banana", "--ratios", "0.5", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_usage_error_on_crop_exceeding_image(self, tmp_path):
        code = main(
            ["analyze-bias", "--image", "8x8", "--crop", "9x9", "--out", str(tmp_path / "o")]
        )
        assert code == 2


class TestAnalyzeCategories:
    def test_border_field_curve(self, tmp_path):
        from scopeflow.synthetic import border_speed_flow

        flow_path = tmp_path / "field.flo"
        flowio.write_flo_file(flow_path, border_speed_flow(64, 64))
        out = tmp_path / "cats"
        code = main(
            [
                "analyze-categories",
                "--flow", str(flow_path),
                "--ratios", "0.5,0.7,0.9,1.0",
                "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        ratios = [row["ratio"] for row in summary["curve"]]
        assert ratios[0] < 1.0
        assert all(a < b for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == 1.0
        csv_lines = (out / "ratio_curve.csv").read_text().splitlines()
        assert csv_lines[0] == "crop_ratio,fast_mass,slow_mass,ratio"
        assert len(csv_lines) == 5

    def test_empty_category_is_validation_error(self, tmp_path):
        flow_path = tmp_path / "uniform.flo"
        write_constant_flo(flow_path, 16, 16, 1.0, 0.0)
        code = main(
            ["analyze-categories", "--flow", str(flow_path), "--out", str(tmp_path / "o")]
        )
        assert code == 4


class TestAugment:
    def test_writes_samples_and_sidecars(self, tmp_path, demo_config):
        out = tmp_path / "aug"
        code = main(
            [
                "augment",
                "--config", str(demo_config),
                "--stage", "demo",
                "--count", "4",
                "--seed", "21",
                "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["written"] == [f"sample_{i:04d}" for i in range(4)]
        assert summary["failures"] == []
        for i in range(4):
            stem = f"sample_{i:04d}"
            assert (out / f"{stem}_img1.png").exists()
            assert (out / f"{stem}_img2.png").exists()
            assert (out / f"{stem}_flow.flo").exists()
            assert (out / f"{stem}_occ.png").exists()
            sidecar = json.loads((out / f"{stem}_params.json").read_text())
            p = sidecar["params"]
            assert 0.9 <= p["zoom"] <= 1.2
            assert abs(np.degrees(p["rotation"])) <= 3.0
            assert all(0.9 <= g <= 1.1 for g in p["color_gain"])
            assert 0.0 <= p["noise_sigma"] <= 0.01
            crop = sidecar["crop"]
            assert crop["h"] <= 48 and crop["w"] <= 64

    def test_rerun_is_byte_identical(self, tmp_path, demo_config):
        trees = []
        for name in ("one", "two"):
            out = tmp_path / name
            code = main(
                [
                    "augment",
                    "--config", str(demo_config),
                    "--stage", "demo",
                    "--count", "3",
                    "--seed", "5",
                    "--out", str(out),
                ]
            )
            assert code == 0
            trees.append(read_tree(out))
        assert trees[0] == trees[1]

    def test_identity_stage_reproduces_inputs(self, tmp_path):
        data = build_dataset(tmp_path / "data", n_pairs=2, with_occlusions=False)
        config = tmp_path / "identity.yaml"
        config.write_text(
            stage_yaml(
                data,
                crop={"kind": "max"},
                zoom={"min": 1.0, "max_start": 1.0, "max_end": 1.0},
                photometric={"gain": [1.0, 1.0], "gamma": [1.0, 1.0], "noise_sigma_max": 0.0},
                geometric={"rotation_max_deg": 0.0, "translation_max": 0.0,
                           "hflip": False, "vflip": False},
                noise=False,
            )
        )
        out = tmp_path / "aug"
        code = main(
            ["augment", "--config", str(config), "--stage", "demo",
             "--count", "2", "--seed", "0", "--out", str(out)]
        )
        assert code == 0
        src = flowio.read_image(data / "images" / "frame_0001.png")
        got = flowio.read_image(out / "sample_0000_img1.png")
        assert np.array_equal(src.data, got.data)
        assert (out / "sample_0000_flow.flo").read_bytes() == (
            data / "flow" / "frame_0001.flo"
        ).read_bytes()

    def test_plan_replay_reproduces_cli_bytes(self, tmp_path, demo_config, dataset_dir):
        # the hand-off contract: an external consumer replaying the batch
        # plan through the documented recipe gets the CLI's exact bytes
        from scopeflow import schedule, scoping
        from scopeflow.augmentation import apply_augmentation, sample_params
        from scopeflow.rng import make_rng

        out = tmp_path / "aug"
        assert main(
            ["augment", "--config", str(demo_config), "--stage", "demo",
             "--count", "2", "--seed", "42", "--out", str(out)]
        ) == 0

        protocol = schedule.load_protocol(demo_config)
        stage = protocol.stage("demo")
        entries = flowio.index_dataset(
            dataset_dir / "images", dataset_dir / "flow", dataset_dir / "occlusions"
        )
        plan = schedule.emit_batch_plan(
            protocol, "demo", 0, make_rng(42), image_size=(48, 64), num_batches=1
        )
        cfg = stage.augmentation_config()
        directive = plan.directives[0]
        for k, (pseed, aseed) in enumerate(
            zip(directive.placement_seeds, directive.augment_seeds)
        ):
            sample = flowio.load_sample(entries[k])
            rng = make_rng(aseed)
            params = sample_params(cfg, plan.progress, rng)
            aug = apply_augmentation(sample, params, rng)
            spec = scoping.place_crop(
                directive.crop_h, directive.crop_w, aug.height, aug.width, make_rng(pseed)
            )
            replayed = scoping.apply_crop(aug, spec)
            assert flowio.write_flo(replayed.flow) == (
                out / f"sample_{k:04d}_flow.flo"
            ).read_bytes()
            from_cli = flowio.read_image(out / f"sample_{k:04d}_img1.png").data
            expected = np.rint(replayed.frame1.data * 255) / 255
            assert np.allclose(from_cli, expected, atol=1e-6)

    def test_env_seed_fallback(self, tmp_path, demo_config, monkeypatch):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("SCOPEFLOW_SEED", "5")
        main(["augment", "--config", str(demo_config), "--stage", "demo",
              "--count", "2", "--out", str(out_a)])
        monkeypatch.delenv("SCOPEFLOW_SEED")
        main(["augment", "--config", str(demo_config), "--stage", "demo",
              "--count", "2", "--seed", "5", "--out", str(out_b)])
        assert read_tree(out_a) == read_tree(out_b)

    def test_missing_dataset_is_io_error(self, tmp_path, demo_config):
        code = main(
            ["augment", "--config", str(demo_config), "--stage", "demo",
             "--count", "1", "--out", str(tmp_path / "x"),
             "--data-root", str(tmp_path / "nowhere")]
        )
        assert code == 3

    def test_crop_strategy_override(self, tmp_path, demo_config):
        out = tmp_path / "aug"
        code = main(
            ["augment", "--config", str(demo_config), "--stage", "demo",
             "--count", "2", "--seed", "3", "--out", str(out), "--crop", "max"]
        )
        assert code == 0
        for i in range(2):
            crop = json.loads((out / f"sample_{i:04d}_params.json").read_text())["crop"]
            assert (crop["h"], crop["w"]) == (48, 64)

    def test_kitti_format_dataset_end_to_end(self, tmp_path):
        data = build_dataset(
            tmp_path / "data", n_pairs=2, with_occlusions=False, flow_format="kitti_png"
        )
        config = tmp_path / "cfg.yaml"
        config.write_text(
            stage_yaml(data, dataset={"path": str(data), "format": "kitti_png"})
        )
        out = tmp_path / "aug"
        code = main(
            ["augment", "--config", str(config), "--stage", "demo",
             "--count", "2", "--seed", "6", "--out", str(out)]
        )
        assert code == 0
        # the sparse hole must survive augmentation as invalid pixels
        for i in range(2):
            flow = flowio.read_flo_file(out / f"sample_{i:04d}_flow.flo")
            assert not flow.valid.all()
            assert (flow.u[~flow.valid] == 0).all() or (
                np.abs(flow.u[~flow.valid]) > 1e9
            ).all()

    def test_corrupt_sample_skipped_with_nonzero_exit(self, tmp_path, dataset_dir, capsys):
        # break the flow file of the first pair
        (dataset_dir / "flow" / "frame_0001.flo").write_bytes(b"not a flow file")
        config = tmp_path / "cfg.yaml"
        config.write_text(stage_yaml(dataset_dir))
        out = tmp_path / "aug"
        code = main(
            ["augment", "--config", str(config), "--stage", "demo",
             "--count", "2", "--seed", "1", "--out", str(out)]
        )
        assert code == 4
        summary = json.loads((out / "summary.json").read_text())
        assert [f["sample"] for f in summary["failures"]] == ["sample_0000"]
        assert summary["written"] == ["sample_0001"]
        assert not (out / "sample_0000_img1.png").exists()
        assert (out / "sample_0001_flow.flo").exists()


class TestEval:
    def test_identical_files_zero_epe(self, tmp_path, capsys):
        path = tmp_path / "f.flo"
        write_constant_flo(path, 8, 8, 1.0, 2.0)
        code = main(["eval", "--pred", str(path), "--gt", str(path)])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["epe"] == 0.0
        assert metrics["outlier_rate"] == 0.0

    def test_constant_offset(self, tmp_path, capsys):
        gt = tmp_path / "gt.flo"
        pred = tmp_path / "pred.flo"
        write_constant_flo(gt, 6, 6, 0.0, 0.0)
        write_constant_flo(pred, 6, 6, 3.0, 4.0)
        code = main(["eval", "--pred", str(pred), "--gt", str(gt)])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["epe"] == 5.0
        assert metrics["outlier_rate"] == 1.0

    def test_dims_mismatch_is_usage_error(self, tmp_path):
        a, b = tmp_path / "a.flo", tmp_path / "b.flo"
        write_constant_flo(a, 4, 4, 0, 0)
        write_constant_flo(b, 4, 5, 0, 0)
        assert main(["eval", "--pred", str(a), "--gt", str(b)]) == 2

    def test_occlusion_f1_reported(self, tmp_path, capsys):
        flow = tmp_path / "f.flo"
        write_constant_flo(flow, 4, 4, 0, 0)
        occ = flowio.OcclusionMap(np.eye(4, dtype=bool))
        pred_occ, gt_occ = tmp_path / "p.png", tmp_path / "g.png"
        flowio.write_occlusion_png(pred_occ, occ)
        flowio.write_occlusion_png(gt_occ, occ)
        code = main(
            ["eval", "--pred", str(flow), "--gt", str(flow),
             "--pred-occ", str(pred_occ), "--gt-occ", str(gt_occ)]
        )
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["f1"] == 1.0

    def test_error_map_written(self, tmp_path, capsys):
        gt, pred = tmp_path / "gt.flo", tmp_path / "pred.flo"
        write_constant_flo(gt, 4, 4, 0, 0)
        write_constant_flo(pred, 4, 4, 1.0, 0.0)
        pgm = tmp_path / "err.pgm"
        code = main(["eval", "--pred", str(pred), "--gt", str(gt), "--error-map", str(pgm)])
        assert code == 0
        assert pgm.read_bytes().startswith(b"P5\n4 4\n65535\n")

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["eval", "--pred", str(tmp_path / "no.flo"), "--gt", str(tmp_path / "no.flo")]) == 3


class TestConvert:
    def test_roundtrip_within_quantization(self, tmp_path):
        src = tmp_path / "src.flo"
        field = flowio.FlowField.dense(
            np.random.default_rng(0).uniform(-5, 5, (6, 8)),
            np.random.default_rng(1).uniform(-5, 5, (6, 8)),
        )
        flowio.write_flo_file(src, field)
        png = tmp_path / "mid.png"
        back = tmp_path / "back.flo"
        assert main(["convert", str(src), str(png)]) == 0
        assert main(["convert", str(png), str(back)]) == 0
        restored = flowio.read_flo_file(back)
        assert np.abs(restored.u - field.u.astype(np.float32)).max() <= 1 / 64
        assert np.abs(restored.v - field.v.astype(np.float32)).max() <= 1 / 64

    def test_out_of_range_is_validation_error(self, tmp_path):
        src = tmp_path / "big.flo"
        write_constant_flo(src, 2, 2, 600.0, 0.0)
        assert main(["convert", str(src), str(tmp_path / "out.png")]) == 4

    def test_unsupported_extensions_usage_error(self, tmp_path):
        src = tmp_path / "a.flo"
        write_constant_flo(src, 2, 2, 0, 0)
        assert main(["convert", str(src), str(tmp_path / "b.tiff")]) == 2


class TestValidateConfig:
    def test_valid_config(self, demo_config, capsys):
        assert main(["validate-config", str(demo_config)]) == 0
        assert "OK: 1 stage(s): demo" in capsys.readouterr().out

    def test_invalid_config_exit_4(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("seed: 1\nstages: []\n")
        assert main(["validate-config", str(bad)]) == 4

    def test_unknown_key_exit_4(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(
            "stages:\n  - name: a\n    dataset: {path: x}\n    epochs: 1\n    speed: 9\n"
        )
        assert main(["validate-config", str(bad)]) == 4

    def test_missing_file_exit_3(self, tmp_path):
        assert main(["validate-config", str(tmp_path / "ghost.yaml")]) == 3

    def test_shipped_presets_validate(self):
        from scopeflow.schedule import preset_dir

        for preset in sorted(preset_dir().glob("*.yaml")):
            assert main(["validate-config", str(preset)]) == 0


class TestShowPlan:
    def test_plan_to_stdout_and_file(self, tmp_path, demo_config, capsys):
        out = tmp_path / "plan.json"
        code = main(
            ["show-plan", "--config", str(demo_config), "--stage", "demo",
             "--epoch", "1", "--image-size", "48x64", "--batches", "3",
             "--seed", "4", "--out", str(out)]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert printed == out.read_text()
        plan = json.loads(printed)
        assert plan["stage"] == "demo"
        assert plan["progress"] == 0.25
        assert len(plan["directives"]) == 3

    def test_determinism(self, demo_config, capsys):
        argv = ["show-plan", "--config", str(demo_config), "--stage", "demo",
                "--epoch", "0", "--image-size", "48x64", "--batches", "2", "--seed", "7"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first

    def test_unknown_stage_exit_4(self, demo_config):
        assert main(
            ["show-plan", "--config", str(demo_config), "--stage", "ghost",
             "--epoch", "0", "--image-size", "8x8", "--batches", "1"]
        ) == 4

    def test_crop_strategy_override(self, demo_config, capsys):
        code = main(
            ["show-plan", "--config", str(demo_config), "--stage", "demo",
             "--epoch", "0", "--image-size", "48x64", "--batches", "3",
             "--seed", "1", "--crop", "fixed:8,9"]
        )
        assert code == 0
        plan = json.loads(capsys.readouterr().out)
        assert all(d["crop_h"] == 8 and d["crop_w"] == 9 for d in plan["directives"])

    def test_bad_crop_override_is_usage_error(self, demo_config):
        with pytest.raises(SystemExit) as exc:
            main(["show-plan", "--config", str(demo_config), "--stage", "demo",
                  "--epoch", "0", "--image-size", "8x8", "--batches", "1",
                  "--crop", "diagonal:3"])
        assert exc.value.code == 2


class TestPgmWriter:
    def test_layout_and_scaling(self, tmp_path):
        path = tmp_path / "x.pgm"
        write_pgm16(path, np.array([[0.0, 1.0], [0.5, 0.25]]))
        data = path.read_bytes()
        assert data.startswith(b"P5\n2 2\n65535\n")
        values = np.frombuffer(data[len(b"P5\n2 2\n65535\n"):], dtype=">u2")
        assert values.tolist() == [0, 65535, 32768, 16384]
