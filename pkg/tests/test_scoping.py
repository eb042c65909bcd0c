"""Crop strategy draws, placement statistics and crop application."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scopeflow import flowops, scoping
from scopeflow.errors import (
    CropTooLargeError,
    InvalidStrategyError,
    OutOfBoundsError,
)
from scopeflow.flowio import FlowField, FlowSample, ImageRaster, OcclusionMap
from scopeflow.rng import make_rng
from scopeflow.scoping import (
    CropSpec,
    FixedPartial,
    FixedRatioSet,
    MaxValid,
    RatioRange,
    apply_crop,
    choose_crop_size,
    format_strategy,
    max_valid_crop,
    parse_strategy,
    place_crop,
    ratio_to_size,
    round_half_away_from_zero,
    strategy_from_config,
    strategy_to_config,
)

RATIO_SET = ((0.73, 0.69), (0.84, 0.86), (1.0, 1.0))


def make_sample(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return FlowSample(
        frame1=ImageRaster(rng.random((h, w)).astype(np.float32)),
        frame2=ImageRaster(rng.random((h, w)).astype(np.float32)),
        flow=FlowField.dense(rng.uniform(-3, 3, (h, w)), rng.uniform(-3, 3, (h, w))),
        occlusion=OcclusionMap(rng.random((h, w)) > 0.8),
    )


class TestRounding:
    def test_half_rounds_away_from_zero(self):
        assert round_half_away_from_zero(2.5) == 3
        assert round_half_away_from_zero(3.5) == 4
        assert round_half_away_from_zero(-2.5) == -3

    def test_ratio_to_size_clamps(self):
        assert ratio_to_size(0.5, 5) == 3
        assert ratio_to_size(1.0, 5) == 5
        assert ratio_to_size(0.01, 5) == 1


class TestChooseCropSize:
    def test_fixed_returns_its_size(self):
        assert choose_crop_size(FixedPartial(384, 768), 436, 1024, make_rng(0)) == (384, 768)

    def test_fixed_too_large_rejected(self):
        with pytest.raises(InvalidStrategyError):
            choose_crop_size(FixedPartial(500, 500), 436, 1024, make_rng(0))

    def test_max_valid_returns_image_size(self):
        assert choose_crop_size(MaxValid(), 436, 1024, make_rng(0)) == (436, 1024)

    def test_ratio_set_hits_exactly_the_rounded_sizes(self):
        expected = {(318, 707), (366, 881), (436, 1024)}
        rng = make_rng(123)
        seen = {
            choose_crop_size(FixedRatioSet(RATIO_SET), 436, 1024, rng)
            for _ in range(200)
        }
        assert seen == expected

    def test_degenerate_range_equals_max_valid(self):
        assert choose_crop_size(RatioRange(1.0, 1.0), 436, 1024, make_rng(0)) == (436, 1024)

    def test_range_endpoints(self):
        # round(0.95 * 1024) = 973
        rng = make_rng(7)
        widths = {
            choose_crop_size(RatioRange(0.95, 1.0), 1024, 1024, rng)[1]
            for _ in range(5000)
        }
        assert min(widths) == 973
        assert max(widths) == 1024

    @given(
        st.integers(8, 512),
        st.integers(8, 512),
        st.floats(0.1, 1.0),
        st.floats(0.0, 1.0),
        st.integers(0, 2**31),
    )
    @settings(max_examples=200, deadline=None)
    def test_range_draw_hard_bounds(self, H, W, r_min, frac, seed):
        r_max = r_min + (1.0 - r_min) * frac
        strategy = RatioRange(r_min, r_max)
        h, w = choose_crop_size(strategy, H, W, make_rng(seed))
        for size, S in ((h, H), (w, W)):
            assert ratio_to_size(r_min, S) <= size <= ratio_to_size(r_max, S)
            assert 1 <= size <= S

    def test_determinism(self):
        a = [choose_crop_size(RatioRange(0.5, 1.0), 100, 200, make_rng(99)) for _ in range(1)]
        b = [choose_crop_size(RatioRange(0.5, 1.0), 100, 200, make_rng(99)) for _ in range(1)]
        assert a == b

    def test_set_validation(self):
        with pytest.raises(InvalidStrategyError):
            FixedRatioSet(())
        with pytest.raises(InvalidStrategyError):
            FixedRatioSet(((0.0, 0.5),))
        with pytest.raises(InvalidStrategyError):
            RatioRange(0.9, 0.8)


class TestPlaceCrop:
    def test_full_size_crop_always_at_origin(self):
        spec = place_crop(7, 9, 7, 9, make_rng(0))
        assert (spec.y0, spec.x0) == (0, 0)

    def test_center_pixel_always_covered(self):
        # width 8, crop 5: every placement covers pixel x = 3
        rng = make_rng(5)
        for _ in range(500):
            spec = place_crop(1, 5, 1, 8, rng)
            assert spec.x0 <= 3 < spec.x0 + 5
            assert 0 <= spec.x0 <= 3

    def test_crop_too_large(self):
        with pytest.raises(CropTooLargeError):
            place_crop(10, 10, 5, 20, make_rng(0))

    def test_determinism(self):
        a = [place_crop(4, 4, 16, 16, make_rng(11)) for _ in range(3)]
        b = [place_crop(4, 4, 16, 16, make_rng(11)) for _ in range(3)]
        assert a == b

    def test_empirical_coverage_matches_analytic(self):
        # light version of the acceptance Monte Carlo: 16x16, crop 11x13
        from scopeflow.sampling import Geometry2D, probability_map

        H = W = 16
        h, w = 11, 13
        n = 20000
        rng = make_rng(2024)
        hist = np.zeros((H - h + 1, W - w + 1), dtype=np.int64)
        for _ in range(n):
            spec = place_crop(h, w, H, W, rng)
            hist[spec.y0, spec.x0] += 1
        coverage = np.zeros((H, W))
        for y0 in range(H - h + 1):
            for x0 in range(W - w + 1):
                coverage[y0 : y0 + h, x0 : x0 + w] += hist[y0, x0]
        freq = coverage / n
        p = probability_map(Geometry2D(H, W, h, w))
        bound = 4.0 * np.sqrt(p * (1 - p) / n)
        assert (np.abs(freq - p) <= bound + 1e-12).all()


class TestMaxValidCrop:
    def test_elementwise_minimum(self):
        assert max_valid_crop([(436, 1024), (375, 1242), (370, 1226)]) == (370, 1024)

    def test_empty_batch(self):
        with pytest.raises(InvalidStrategyError):
            max_valid_crop([])


class TestApplyCrop:
    def test_full_image_crop_is_identity(self):
        sample = make_sample(6, 8)
        out = apply_crop(sample, CropSpec(h=6, w=8, x0=0, y0=0))
        assert np.array_equal(out.frame1.data, sample.frame1.data)
        assert np.array_equal(out.flow.u, sample.flow.u)
        assert np.array_equal(out.occlusion.occluded, sample.occlusion.occluded)

    def test_crop_composition(self):
        sample = make_sample(12, 16)
        c1 = CropSpec(h=8, w=10, x0=3, y0=2)
        c2 = CropSpec(h=5, w=6, x0=2, y0=1)
        twice = apply_crop(apply_crop(sample, c1), c2)
        once = apply_crop(sample, CropSpec(h=5, w=6, x0=5, y0=3))
        assert np.array_equal(twice.frame1.data, once.frame1.data)
        assert np.array_equal(twice.flow.v, once.flow.v)

    def test_flow_values_unchanged(self):
        sample = make_sample(10, 10)
        out = apply_crop(sample, CropSpec(h=4, w=4, x0=2, y0=3))
        assert np.array_equal(out.flow.u, sample.flow.u[3:7, 2:6])

    def test_out_of_bounds(self):
        sample = make_sample(5, 5)
        with pytest.raises(OutOfBoundsError):
            apply_crop(sample, CropSpec(h=4, w=4, x0=3, y0=0))

    def test_windowed_epe_consistency(self):
        rng = np.random.default_rng(17)
        gt = FlowField.dense(rng.uniform(-4, 4, (12, 14)), rng.uniform(-4, 4, (12, 14)))
        pred = FlowField.dense(gt.u + rng.random((12, 14)), gt.v + rng.random((12, 14)))
        c = CropSpec(h=5, w=6, x0=4, y0=3)
        cropped = flowops.epe(scoping.crop_flow(pred, c), scoping.crop_flow(gt, c))
        windowed = float(
            flowops.epe_map(pred, gt)[c.y0 : c.y0 + c.h, c.x0 : c.x0 + c.w].mean()
        )
        assert cropped == pytest.approx(windowed, abs=1e-15)


class TestStrategySerialization:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("fixed:384,768", FixedPartial(384, 768)),
            ("max", MaxValid()),
            ("set:0.73,0.69;0.84,0.86;1,1", FixedRatioSet(RATIO_SET)),
            ("range:0.95,1", RatioRange(0.95, 1.0)),
        ],
    )
    def test_parse_and_format_roundtrip(self, text, expected):
        strategy = parse_strategy(text)
        assert strategy == expected
        assert parse_strategy(format_strategy(strategy)) == strategy

    def test_config_mapping_roundtrip(self):
        for s in (FixedPartial(2, 3), MaxValid(), FixedRatioSet(RATIO_SET), RatioRange(0.9, 1.0)):
            assert strategy_from_config(strategy_to_config(s)) == s

    def test_parse_rejects_garbage(self):
        with pytest.raises(InvalidStrategyError):
            parse_strategy("diagonal:1,2")
        with pytest.raises(InvalidStrategyError):
            parse_strategy("fixed:a,b")
