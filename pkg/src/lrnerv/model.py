"""NeRV-style decoder: frame-index embedding, MLP stem, upsampling stages.

Each stage is a stride-1 3x3 convolution (dense or low-rank separable,
per the factorization plan) followed by pixel-shuffle upsampling and an
activation; a 3x3 head plus sigmoid maps to RGB in [0, 1]. The whole
decoder is overfitted to one clip with Adam.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .lrconv import FactorizationPlan, LRConvLayer, he_uniform, init_lrconv, lrconv_forward, select_rank
from .metrics import psnr
from .optim import adam_init, adam_step, cosine_lr
from .tensor import GradTape, Tensor, backward

_ACTIVATIONS = {"gelu": T.gelu, "relu": T.relu}


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class StageSpec:
    c_in: int
    c_out: int
    upscale: int


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder hyperparameters; canonical and toy variants are data, not code.

    Stage i consumes ``stages[i-1].c_out / stages[i-1].upscale**2`` channels,
    and the product of upscales carries (stem_h, stem_w) to (height, width).
    """

    width: int
    height: int
    stages: tuple[StageSpec, ...]
    stem_width: int
    stem_h: int
    stem_w: int
    embed_freqs: int = 80
    embed_base: float = 1.25
    activation: str = "gelu"
    plan: FactorizationPlan = field(default_factory=FactorizationPlan)

    def __post_init__(self):
        self.validate()

    @property
    def stem_channels(self) -> int:
        return self.stages[0].c_in

    @property
    def embed_dim(self) -> int:
        return 2 * self.embed_freqs

    def with_plan(self, plan: FactorizationPlan) -> "DecoderConfig":
        return replace(self, plan=plan)

    def validate(self) -> None:
        if not self.stages:
            raise ValueError("config needs at least one stage")
        h, w = self.stem_h, self.stem_w
        prev_out = None
        for i, s in enumerate(self.stages):
            if s.upscale < 1:
                raise ValueError(f"stage {i}: upscale must be >= 1")
            if s.c_out % (s.upscale ** 2) != 0:
                raise ValueError(f"stage {i}: c_out {s.c_out} not divisible by upscale^2")
            if prev_out is not None and s.c_in != prev_out:
                raise ValueError(
                    f"stage {i}: c_in {s.c_in} != previous post-shuffle channels {prev_out}")
            prev_out = s.c_out // (s.upscale ** 2)
            h, w = h * s.upscale, w * s.upscale
        if (h, w) != (self.height, self.width):
            raise ValueError(
                f"upscale chain reaches {h}x{w}, config target is {self.height}x{self.width}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.embed_freqs < 1:
            raise ValueError("embed_freqs must be >= 1")
        self.plan.validate(len(self.stages))

    @property
    def head_channels(self) -> int:
        last = self.stages[-1]
        return last.c_out // (last.upscale ** 2)


@dataclass
class DenseConv:
    """Plain 3x3 stage convolution."""

    w: Tensor
    bias: Tensor


@dataclass
class NervModel:
    config: DecoderConfig
    stem_w1: Tensor
    stem_b1: Tensor
    stem_w2: Tensor
    stem_b2: Tensor
    stage_layers: list[DenseConv | LRConvLayer]
    head_w: Tensor
    head_b: Tensor

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All trainable tensors in a fixed, checkpoint-stable order."""
        named: list[tuple[str, Tensor]] = [
            ("stem.fc1.w", self.stem_w1), ("stem.fc1.b", self.stem_b1),
            ("stem.fc2.w", self.stem_w2), ("stem.fc2.b", self.stem_b2),
        ]
        for i, layer in enumerate(self.stage_layers):
            if isinstance(layer, LRConvLayer):
                named += [(f"stage{i}.w1", layer.w1), (f"stage{i}.w2", layer.w2),
                          (f"stage{i}.b", layer.bias)]
            else:
                named += [(f"stage{i}.w", layer.w), (f"stage{i}.b", layer.bias)]
        named += [("head.w", self.head_w), ("head.b", self.head_b)]
        return named


@dataclass
class TrainReport:
    losses: list[float]
    final_psnr: list[float]
    wall_clock: float
    seed: int
    steps: int


def positional_embedding(t: float, freqs: int, base: float) -> np.ndarray:
    """Interleaved [sin(b^0 pi t), cos(b^0 pi t), ..., sin(b^{L-1} pi t), cos(...)]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"normalized frame index must be in [0, 1], got {t}")
    if freqs < 1:
        raise ValueError("need at least one frequency")
    angles = (base ** np.arange(freqs)) * np.pi * t
    out = np.empty(2 * freqs)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def frame_time(index: int, n_frames: int) -> float:
    """Normalized index i/(N-1); a single frame maps to t=0."""
    if n_frames <= 1:
        return 0.0
    return index / (n_frames - 1)


def build_model(config: DecoderConfig, seed) -> NervModel:
    """Deterministic model init; stages in the plan become LRConv layers.

    Each component (stem, every stage, head) draws from its own spawned RNG
    stream, so changing the plan leaves all other components' parameters
    bitwise untouched for the same seed.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(config.stages) + 2)
    stem_rng = np.random.default_rng(children[0])

    c0 = config.stem_channels
    stem_out = c0 * config.stem_h * config.stem_w
    stem_w1 = he_uniform(stem_rng, (config.stem_width, config.embed_dim), fan_in=config.embed_dim)
    stem_b1 = Tensor(np.zeros(config.stem_width), requires_grad=True)
    stem_w2 = he_uniform(stem_rng, (stem_out, config.stem_width), fan_in=config.stem_width)
    stem_b2 = Tensor(np.zeros(stem_out), requires_grad=True)

    layers: list[DenseConv | LRConvLayer] = []
    for i, s in enumerate(config.stages):
        child = children[i + 1]
        if i in config.plan.stages:
            layers.append(init_lrconv(s.c_in, s.c_out, 3, config.plan.rho, child))
        else:
            rng = np.random.default_rng(child)
            w = he_uniform(rng, (s.c_out, s.c_in, 3, 3), fan_in=s.c_in * 9)
            layers.append(DenseConv(w=w, bias=Tensor(np.zeros(s.c_out), requires_grad=True)))

    head_rng = np.random.default_rng(children[-1])
    head_w = he_uniform(head_rng, (3, config.head_channels, 3, 3), fan_in=config.head_channels * 9)
    head_b = Tensor(np.zeros(3), requires_grad=True)

    return NervModel(config=config, stem_w1=stem_w1, stem_b1=stem_b1,
                     stem_w2=stem_w2, stem_b2=stem_b2, stage_layers=layers,
                     head_w=head_w, head_b=head_b)


def forward(model: NervModel, t: float) -> Tensor:
    """Decode one frame at normalized index t; output (3, H, W) in [0, 1]."""
    cfg = model.config
    act = _ACTIVATIONS[cfg.activation]
    emb = Tensor(positional_embedding(t, cfg.embed_freqs, cfg.embed_base))
    h = act(T.linear(emb, model.stem_w1, model.stem_b1))
    h = act(T.linear(h, model.stem_w2, model.stem_b2))
    x = T.reshape(h, (cfg.stem_channels, cfg.stem_h, cfg.stem_w))
    for spec, layer in zip(cfg.stages, model.stage_layers):
        if isinstance(layer, LRConvLayer):
            x = lrconv_forward(layer, x)
        else:
            x = T.conv2d(x, layer.w, bias=layer.bias, pad=(1, 1))
        x = T.pixel_shuffle(x, spec.upscale)
        x = act(x)
    y = T.conv2d(x, model.head_w, bias=model.head_b, pad=(1, 1))
    out = T.sigmoid(y)
    if not np.all(np.isfinite(out.data)):
        raise ValueError("decoded frame contains non-finite values (NaN parameters?)")
    return out


# ---------------------------------------------------------------------------
# loss: alpha * L1 + (1 - alpha) * (1 - SSIM), both terms differentiable

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2
_ssim_kernel_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gaussian_1d(n: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _ssim_kernels(channels: int) -> tuple[np.ndarray, np.ndarray]:
    # block-diagonal separable 11x11 Gaussian, one diagonal block per channel
    if channels not in _ssim_kernel_cache:
        g = _gaussian_1d()
        kv = np.zeros((channels, channels, 11, 1))
        kh = np.zeros((channels, channels, 1, 11))
        for c in range(channels):
            kv[c, c, :, 0] = g
            kh[c, c, 0, :] = g
        _ssim_kernel_cache[channels] = (kv, kh)
    return _ssim_kernel_cache[channels]


def _blur(x: Tensor, kv: np.ndarray, kh: np.ndarray) -> Tensor:
    return T.conv2d(T.conv2d(x, kv), kh)  # valid padding on both passes


def ssim_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable single-scale SSIM (11x11 Gaussian, sigma 1.5, valid
    windows, data range 1), averaged over channels and positions."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[1], a.shape[2]) < 11:
        raise ValueError("frames must be at least 11x11 for the SSIM window")
    kv, kh = _ssim_kernels(a.shape[0])
    mu_a = _blur(a, kv, kh)
    mu_b = _blur(b, kv, kh)
    var_a = _blur(T.square(a), kv, kh) - T.square(mu_a)
    var_b = _blur(T.square(b), kv, kh) - T.square(mu_b)
    cov = _blur(T.mul(a, b), kv, kh) - T.mul(mu_a, mu_b)
    lum = (2.0 * T.mul(mu_a, mu_b) + _SSIM_C1) / (T.square(mu_a) + T.square(mu_b) + _SSIM_C1)
    cs = (2.0 * cov + _SSIM_C2) / (var_a + var_b + _SSIM_C2)
    return T.mean(T.mul(lum, cs))


def loss(pred: Tensor, gt: Tensor, alpha: float = 0.7) -> Tensor:
    """alpha * L1 + (1 - alpha) * (1 - SSIM); zero iff pred == gt."""
    gt = T.as_tensor(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    l1 = T.mean(T.abs_(pred - gt))
    if alpha >= 1.0:
        return l1
    return alpha * l1 + (1.0 - alpha) * (1.0 - ssim_tensor(pred, gt))


# ---------------------------------------------------------------------------
# training


def _snap_f32(params: list[Tensor]) -> None:
    # parameters live on the float32 grid (checkpoints store F32 payloads
    # bitwise); all arithmetic stays float64
    for p in params:
        p.data = p.data.astype(np.float32).astype(np.float64)


def fit(frames, config: DecoderConfig, steps: int, seed: int,
        lr: float = 5e-4, alpha: float = 0.7) -> tuple[NervModel, TrainReport]:
    """Overfit the decoder to ``frames``; one step = one frame update.

    Frames are swept in a freshly shuffled order each epoch; Adam runs under
    a cosine schedule decaying to 10% of ``lr``. Bitwise reproducible for a
    fixed seed (single-threaded BLAS). Raises TrainingDiverged on NaN loss.
    """
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not frames:
        raise ValueError("need at least one frame")
    for i, f in enumerate(frames):
        if f.shape != (3, config.height, config.width):
            raise ValueError(
                f"frame {i} has shape {f.shape}, config expects (3, {config.height}, {config.width})")

    root = np.random.SeedSequence(seed)
    model_ss, shuffle_ss = root.spawn(2)
    model = build_model(config, model_ss)
    params = [t for _, t in model.parameters()]
    _snap_f32(params)
    state = adam_init(params, lr=lr)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    n = len(frames)
    t_of = [frame_time(i, n) for i in range(n)]
    start = time.perf_counter()
    losses: list[float] = []
    order: np.ndarray = np.empty(0, dtype=np.intp)
    for step in range(steps):
        pos = step % n
        if pos == 0:
            order = shuffle_rng.permutation(n)
        idx = int(order[pos])
        tape = GradTape()
        with tape:
            tape.watch(*params)
            pred = forward(model, t_of[idx])
            step_loss = loss(pred, Tensor(frames[idx]), alpha=alpha)
        value = step_loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss became non-finite at step {step} (frame {idx})")
        grads = backward(tape, step_loss)
        adam_step(params, [grads[p] for p in params], state,
                  lr=cosine_lr(step, steps, lr))
        _snap_f32(params)
        losses.append(value)

    final_psnr = [psnr(decode_frame(model, t), f) for t, f in zip(t_of, frames)]
    report = TrainReport(losses=losses, final_psnr=final_psnr,
                         wall_clock=time.perf_counter() - start, seed=seed, steps=steps)
    return model, report


def decode_frame(model: NervModel, t: float) -> np.ndarray:
    """Tape-free forward pass returning a plain array."""
    return forward(model, t).data


def decode_video(model: NervModel, n_frames: int) -> list[np.ndarray]:
    return [decode_frame(model, frame_time(i, n_frames)) for i in range(n_frames)]
