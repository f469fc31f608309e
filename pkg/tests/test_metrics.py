import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrnerv.metrics import (FramePairDistance, flicker_ratio, lpips_distance_from_file,
                            ms_ssim, mse, psnr, resolve_distance, ssim, ssim_distance)

_C1 = 0.01 ** 2
_C2 = 0.03 ** 2


class TestPsnr:
    def test_identical_frames_hit_cap(self, rng):
        f = rng.uniform(0, 1, size=(3, 8, 8))
        assert psnr(f, f) == 99.0

    def test_uniform_offset_hand_value(self, rng):
        a = rng.uniform(0.2, 0.8, size=(3, 16, 16))
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    @given(seed=st.integers(0, 2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.uniform(0, 1, (3, 6, 6)), r.uniform(0, 1, (3, 6, 6))
        assert psnr(a, b) == psnr(b, a)

    def test_consistency_with_independent_mse(self, rng):
        a, b = rng.uniform(0, 1, (3, 9, 9)), rng.uniform(0, 1, (3, 9, 9))
        independent = float(np.mean((a - b) ** 2))
        if independent > 1e-10:
            assert psnr(a, b) == pytest.approx(-10 * np.log10(independent))
        assert mse(a, b) == pytest.approx(independent)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestSsim:
    def test_identical_is_one(self, rng):
        f = rng.uniform(0, 1, size=(3, 16, 16))
        assert ssim(f, f) == pytest.approx(1.0)

    def test_constant_vs_constant_closed_form(self):
        # no variance: SSIM = (2ab + C1) / (a^2 + b^2 + C1)
        for a_val, b_val in ((0.0, 1.0), (0.3, 0.7), (0.5, 0.5)):
            a = np.full((1, 11, 11), a_val)
            b = np.full((1, 11, 11), b_val)
            expected = (2 * a_val * b_val + _C1) / (a_val ** 2 + b_val ** 2 + _C1)
            assert ssim(a, b) == pytest.approx(expected, abs=1e-6)

    def test_black_vs_white_near_zero(self):
        value = ssim(np.zeros((3, 16, 16)), np.ones((3, 16, 16)))
        assert value == pytest.approx(_C1 / (1 + _C1), abs=1e-6)

    def test_too_small_frame(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


class TestMsSsim:
    def test_identical_is_one(self, rng):
        f = rng.uniform(0, 1, size=(3, 64, 128))
        assert ms_ssim(f, f) == pytest.approx(1.0)

    def test_auto_reduces_scales_for_small_frames(self, rng):
        f = rng.uniform(0, 1, size=(3, 16, 16))
        g = np.clip(f + rng.normal(scale=0.05, size=f.shape), 0, 1)
        value = ms_ssim(f, g, scales=5)  # would need >=176 px at 5 scales
        assert 0.0 <= value <= 1.0

    def test_error_when_smaller_than_window(self):
        with pytest.raises(ValueError, match="window"):
            ms_ssim(np.zeros((3, 9, 9)), np.zeros((3, 9, 9)))

    def test_orders_degradation(self, rng):
        f = rng.uniform(0.2, 0.8, size=(3, 64, 64))
        small = np.clip(f + rng.normal(scale=0.02, size=f.shape), 0, 1)
        large = np.clip(f + rng.normal(scale=0.15, size=f.shape), 0, 1)
        assert ms_ssim(f, small) > ms_ssim(f, large)


class TestDistances:
    def test_ssim_distance_axioms(self, rng):
        d = ssim_distance()
        for _ in range(5):
            a = rng.uniform(0, 1, (3, 16, 16))
            b = rng.uniform(0, 1, (3, 16, 16))
            assert d(a, a) == pytest.approx(0.0, abs=1e-12)
            assert d(a, b) == pytest.approx(d(b, a))
            assert d(a, b) >= 0.0

    def test_resolve_known_names(self):
        assert resolve_distance("ssim").name == "ssim"
        with pytest.raises(ValueError, match="unknown distance"):
            resolve_distance("vmaf")

    def test_lpips_missing_file_clear_error(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="LPIPS weight file"):
            lpips_distance_from_file(tmp_path / "nope.npz")

    def test_lpips_from_random_weight_file(self, tmp_path, rng):
        path = tmp_path / "feat.npz"
        np.savez(path,
                 **{"conv0.weight": rng.normal(size=(8, 3, 3, 3)),
                    "conv0.bias": rng.normal(size=8),
                    "lin0.weight": rng.uniform(0.1, 1.0, size=8),
                    "conv0.stride": np.array(2),
                    "conv1.weight": rng.normal(size=(12, 8, 3, 3)),
                    "conv1.bias": rng.normal(size=12),
                    "lin1.weight": rng.uniform(0.1, 1.0, size=12)})
        d = lpips_distance_from_file(path)
        a = rng.uniform(0, 1, (3, 16, 16))
        b = rng.uniform(0, 1, (3, 16, 16))
        assert d(a, a) == pytest.approx(0.0, abs=1e-12)
        assert d(a, b) == pytest.approx(d(b, a))
        assert d(a, b) > 0.0
        assert resolve_distance(f"lpips-file:{path}").name.startswith("lpips-file")


class TestFlickerRatio:
    def test_perfect_reconstruction_all_ones(self, rng):
        frames = [rng.uniform(0, 1, (3, 16, 16)) for _ in range(5)]
        report = flicker_ratio(frames, frames)
        assert len(report.ratios) == 4
        np.testing.assert_allclose(report.ratios, 1.0, atol=1e-9)
        assert report.mean_ratio == pytest.approx(1.0)
        assert report.static_pairs == []

    def test_static_gt_flagged(self, rng):
        static = [np.full((3, 16, 16), 0.5)] * 3
        noisy = [np.clip(f + rng.normal(scale=0.05, size=f.shape), 0, 1) for f in static]
        report = flicker_ratio(noisy, static)
        assert report.static_pairs == [1, 2]
        assert all(r > 1e3 for r in report.ratios)  # epsilon-guard regime

    def test_needs_two_frames(self, rng):
        f = [rng.uniform(0, 1, (3, 16, 16))]
        with pytest.raises(ValueError, match="two frames"):
            flicker_ratio(f, f)

    def test_length_mismatch(self, rng):
        f = [rng.uniform(0, 1, (3, 16, 16)) for _ in range(3)]
        with pytest.raises(ValueError, match="lengths"):
            flicker_ratio(f[:2], f)

    def test_csv_rows_shape(self, rng):
        frames = [rng.uniform(0, 1, (3, 16, 16)) for _ in range(4)]
        report = flicker_ratio(frames, frames)
        rows = report.csv_rows()
        assert [r[0] for r in rows] == [1, 2, 3]
        for _, dr, dg, ratio in rows:
            assert ratio == pytest.approx(dr / max(dg, report.epsilon))

    def test_custom_distance_plugs_in(self, rng):
        l2 = FramePairDistance("l2", lambda a, b: float(np.sqrt(np.mean((a - b) ** 2))))
        frames = [rng.uniform(0, 1, (3, 8, 8)) for _ in range(3)]
        report = flicker_ratio(frames, frames, l2)
        assert report.distance == "l2"
        np.testing.assert_allclose(report.ratios, 1.0)
