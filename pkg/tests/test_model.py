import numpy as np
import pytest

import lrnerv.tensor as T
from lrnerv.config import canonical_config, toy_config
from lrnerv.lrconv import FactorizationPlan, LRConvLayer
from lrnerv.metrics import ssim
from lrnerv.model import (DecoderConfig, DenseConv, StageSpec, build_model, decode_frame,
                          fit, forward, frame_time, loss, positional_embedding, ssim_tensor)
from lrnerv.tensor import GradTape, Tensor, backward
from lrnerv.video import synthetic_video

from conftest import numeric_grad, rel_error


def mini_config(plan=None):
    """Small 5-stage config that trains in well under a second per step."""
    return DecoderConfig(
        width=32, height=16,
        stages=(StageSpec(8, 8, 1), StageSpec(8, 8, 1), StageSpec(8, 32, 2),
                StageSpec(8, 32, 2), StageSpec(8, 32, 2)),
        stem_width=24, stem_h=2, stem_w=4, embed_freqs=12,
        plan=plan or FactorizationPlan(),
    )


class TestPositionalEmbedding:
    def test_t_zero_alternates_zero_one(self):
        out = positional_embedding(0.0, freqs=5, base=1.25)
        np.testing.assert_array_equal(out[0::2], np.zeros(5))
        np.testing.assert_array_equal(out[1::2], np.ones(5))

    def test_output_length(self):
        for L in (1, 7, 80):
            assert positional_embedding(0.3, L, 1.25).shape == (2 * L,)

    def test_hand_case(self):
        out = positional_embedding(0.5, freqs=2, base=2.0)
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0, -1.0], atol=1e-12)

    def test_range_check(self):
        for t in (-0.01, 1.01):
            with pytest.raises(ValueError, match="\\[0, 1\\]"):
                positional_embedding(t, 4, 1.25)

    def test_frame_time(self):
        assert frame_time(0, 8) == 0.0
        assert frame_time(7, 8) == 1.0
        assert frame_time(0, 1) == 0.0


class TestConfig:
    def test_channel_chain_violation(self):
        with pytest.raises(ValueError, match="c_in"):
            DecoderConfig(width=32, height=16,
                          stages=(StageSpec(8, 32, 2), StageSpec(16, 32, 2)),
                          stem_width=8, stem_h=4, stem_w=8)

    def test_resolution_mismatch(self):
        with pytest.raises(ValueError, match="target"):
            DecoderConfig(width=64, height=16,
                          stages=(StageSpec(8, 32, 2),), stem_width=8, stem_h=8, stem_w=16)

    def test_canonical_shape(self):
        cfg = canonical_config()
        assert len(cfg.stages) == 5
        assert (cfg.stages[4].c_in, cfg.stages[4].c_out) == (96, 384)
        assert (cfg.height, cfg.width) == (720, 1280)

    def test_toy_shape(self):
        cfg = toy_config()
        assert len(cfg.stages) == 5
        assert (cfg.height, cfg.width) == (64, 128)


class TestBuildModel:
    def test_empty_plan_is_all_dense(self):
        model = build_model(mini_config(), seed=0)
        assert all(isinstance(l, DenseConv) for l in model.stage_layers)

    def test_canonical_stage4_factor_shapes(self):
        cfg = canonical_config(FactorizationPlan.parse("4"))
        model = build_model(cfg, seed=0)
        layer = model.stage_layers[4]
        assert isinstance(layer, LRConvLayer)
        assert layer.w1.shape == (24, 96, 3, 1)
        assert layer.w2.shape == (384, 24, 1, 3)

    def test_full_plan_has_fewer_params_than_partial(self):
        def total(spec):
            model = build_model(mini_config(FactorizationPlan.parse(spec)), seed=0)
            return sum(t.size for _, t in model.parameters())

        assert total("0-4") < total("1-4") < total("-")

    def test_substitution_locality(self):
        base = dict(build_model(mini_config(), seed=99).parameters())
        swapped = dict(build_model(mini_config(FactorizationPlan.parse("4")), seed=99).parameters())
        shared = {n for n in base if not n.startswith("stage4")}
        assert shared == {n for n in swapped if not n.startswith("stage4")}
        for name in shared:
            np.testing.assert_array_equal(base[name].data, swapped[name].data)

    def test_seed_determinism(self):
        a = build_model(mini_config(), seed=5)
        b = build_model(mini_config(), seed=5)
        for (_, t_a), (_, t_b) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(t_a.data, t_b.data)


class TestForward:
    def test_output_shape_and_range(self):
        model = build_model(mini_config(), seed=0)
        for t in (0.0, 0.31, 1.0):
            out = forward(model, t)
            assert out.shape == (3, 16, 32)
            assert np.all((out.data >= 0.0) & (out.data <= 1.0))

    def test_same_t_same_frame(self):
        model = build_model(mini_config(), seed=0)
        np.testing.assert_array_equal(forward(model, 0.4).data, forward(model, 0.4).data)

    def test_fresh_model_outputs_near_half(self):
        # zero head bias + fan-in-scaled weights keep pre-sigmoid values small
        model = build_model(mini_config(), seed=0)
        out = forward(model, 0.5).data
        assert abs(out.mean() - 0.5) < 0.15
        assert out.std() < 0.25

    def test_shape_chain(self):
        cfg = toy_config()
        model = build_model(cfg, seed=0)
        x = T.reshape(Tensor(np.zeros(cfg.stem_channels * cfg.stem_h * cfg.stem_w)),
                      (cfg.stem_channels, cfg.stem_h, cfg.stem_w))
        h, w = cfg.stem_h, cfg.stem_w
        for spec, layer in zip(cfg.stages, model.stage_layers):
            x = T.conv2d(x, layer.w, bias=layer.bias, pad=(1, 1))
            x = T.pixel_shuffle(x, spec.upscale)
            h, w = h * spec.upscale, w * spec.upscale
            assert x.shape == (spec.c_out // spec.upscale ** 2, h, w)


class TestLoss:
    def test_identical_frames_zero(self, rng):
        f = Tensor(rng.uniform(0.1, 0.9, size=(3, 16, 16)))
        assert loss(f, f).item() == pytest.approx(0.0, abs=1e-12)

    def test_pure_l1_hand_value(self, rng):
        gt = rng.uniform(0.2, 0.7, size=(3, 12, 12))
        pred = gt + 0.1
        assert loss(Tensor(pred), Tensor(gt), alpha=1.0).item() == pytest.approx(0.1)

    def test_nonnegative(self, rng):
        for _ in range(5):
            a = Tensor(rng.uniform(0, 1, size=(3, 16, 16)))
            b = Tensor(rng.uniform(0, 1, size=(3, 16, 16)))
            assert loss(a, b).item() >= 0.0

    def test_ssim_term_matches_metrics_module(self, rng):
        a = rng.uniform(0, 1, size=(3, 24, 24))
        b = rng.uniform(0, 1, size=(3, 24, 24))
        assert ssim_tensor(Tensor(a), Tensor(b)).item() == pytest.approx(ssim(a, b), abs=1e-10)

    def test_gradient_matches_finite_differences(self, rng):
        gt = rng.uniform(0.2, 0.8, size=(3, 12, 12))
        pred = np.clip(gt + rng.normal(scale=0.1, size=gt.shape), 0.05, 0.95)
        p = Tensor(pred, requires_grad=True)
        tape = GradTape()
        with tape:
            l = loss(p, Tensor(gt))
        analytic = backward(tape, l)[p]
        numeric = numeric_grad(lambda a: float(loss(Tensor(a), Tensor(gt)).data), pred.copy())
        assert rel_error(analytic, numeric) <= 1e-4

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            loss(Tensor(np.zeros((3, 12, 12))), Tensor(np.zeros((3, 12, 14))))


class TestFit:
    def test_zero_steps_returns_initialized_model(self):
        frames = synthetic_video(2, 16, 32)
        cfg = mini_config()
        trained, report = fit(frames, cfg, steps=0, seed=3)
        # fit derives the init stream by spawning the root seed once
        fresh = build_model(cfg, np.random.SeedSequence(3).spawn(2)[0])
        for (_, t_a), (_, t_b) in zip(trained.parameters(), fresh.parameters()):
            np.testing.assert_allclose(t_a.data, t_b.data, atol=1e-7)
        assert report.losses == []
        assert len(report.final_psnr) == 2

    def test_seed_reproducibility_bitwise(self):
        frames = synthetic_video(2, 16, 32)
        a, _ = fit(frames, mini_config(), steps=6, seed=7)
        b, _ = fit(frames, mini_config(), steps=6, seed=7)
        for (_, t_a), (_, t_b) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(t_a.data, t_b.data)

    def test_loss_trend_decreases(self):
        frames = synthetic_video(2, 16, 32)
        _, report = fit(frames, mini_config(), steps=60, seed=0)
        first, last = np.mean(report.losses[:10]), np.mean(report.losses[-10:])
        assert last < first

    def test_frame_size_mismatch(self):
        with pytest.raises(ValueError, match="config expects"):
            fit([np.zeros((3, 8, 8))], mini_config(), steps=1, seed=0)

    def test_params_stay_on_f32_grid(self):
        frames = synthetic_video(2, 16, 32)
        model, _ = fit(frames, mini_config(), steps=4, seed=0)
        for _, t in model.parameters():
            np.testing.assert_array_equal(t.data, t.data.astype(np.float32).astype(np.float64))
