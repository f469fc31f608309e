"""Post-training symmetric weight quantization and dequantized evaluation.

Weights only: activations stay real-valued, since the rate side of the study
counts model bits. The scheme is per-tensor symmetric min-max with
round-half-away-from-zero, integer range [-(2^{b-1}-1), 2^{b-1}-1] (for
b=8: [-127, 127], -128 unused).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complexity import bpp
from .lrconv import LRConvLayer
from .metrics import ms_ssim, psnr
from .model import DecoderConfig, DenseConv, NervModel, decode_frame, frame_time
from .tensor import Tensor

Array = np.ndarray


@dataclass(frozen=True)
class QuantizedTensor:
    """Symmetric int8 values plus one positive scale; w ~ values * scale."""

    values: Array  # int8
    scale: float
    shape: tuple[int, ...]

    def __post_init__(self):
        if self.values.dtype != np.int8:
            raise ValueError(f"expected int8 storage, got {self.values.dtype}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def quantize_tensor(w, bits: int = 8) -> QuantizedTensor:
    """Per-tensor symmetric quantization: scale = max|w| / (2^{bits-1} - 1).

    Rounding is half-away-from-zero; an all-zero tensor gets scale 1.0 by
    convention. The max-magnitude element always maps to +/-(2^{bits-1}-1).
    """
    if isinstance(w, Tensor):
        w = w.data
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("cannot quantize non-finite values")
    if not 2 <= bits <= 8:
        raise ValueError(f"bits must be in 2..8 for int8 storage, got {bits}")
    qmax = 2 ** (bits - 1) - 1
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = peak / qmax if peak > 0 else 1.0
    q = np.sign(w) * np.floor(np.abs(w) / scale + 0.5)
    q = np.clip(q, -qmax, qmax).astype(np.int8)
    return QuantizedTensor(values=q, scale=scale, shape=w.shape)


def dequantize_tensor(q: QuantizedTensor) -> Array:
    return q.values.astype(np.float64).reshape(q.shape) * q.scale


@dataclass
class QuantizedCheckpoint:
    """Every trainable tensor of a model, quantized exactly once."""

    config: DecoderConfig
    bits: int
    tensors: dict[str, QuantizedTensor]

    def param_count(self) -> int:
        return sum(int(np.prod(q.shape)) for q in self.tensors.values())

    def bpp(self, n_frames: int) -> float:
        return bpp(self.param_count() * self.bits, n_frames,
                   self.config.height, self.config.width)


def quantize_model(model: NervModel, bits: int = 8) -> QuantizedCheckpoint | NervModel:
    """Quantize all trainable tensors; bits=32 is the documented no-op
    passthrough and returns the float model unchanged."""
    if bits == 32:
        return model
    tensors = {name: quantize_tensor(t, bits) for name, t in model.parameters()}
    return QuantizedCheckpoint(config=model.config, bits=bits, tensors=tensors)


def model_from_quantized(qckpt: QuantizedCheckpoint) -> NervModel:
    """Rebuild a runnable model with dequantized weights."""
    from .model import build_model

    model = build_model(qckpt.config, seed=0)
    names = {name for name, _ in model.parameters()}
    if names != set(qckpt.tensors):
        missing = names ^ set(qckpt.tensors)
        raise ValueError(f"checkpoint does not cover the model exactly: {sorted(missing)}")
    for name, t in model.parameters():
        t.data = dequantize_tensor(qckpt.tensors[name])
    return model


@dataclass
class EvalReport:
    per_frame_psnr: list[float]
    per_frame_ms_ssim: list[float]
    bits: int
    bpp: float

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.per_frame_psnr))

    @property
    def mean_ms_ssim(self) -> float:
        return float(np.mean(self.per_frame_ms_ssim))


def evaluate_model(model: NervModel, frames, bits: int = 32) -> EvalReport:
    """Decode every frame index and score it against the ground truth."""
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    n = len(frames)
    p, s = [], []
    for i, f in enumerate(frames):
        if f.shape != (3, model.config.height, model.config.width):
            raise ValueError(f"frame {i} shape {f.shape} does not match the config")
        rec = decode_frame(model, frame_time(i, n))
        p.append(psnr(rec, f))
        s.append(ms_ssim(rec, f))
    n_params = sum(t.size for _, t in model.parameters())
    return EvalReport(per_frame_psnr=p, per_frame_ms_ssim=s, bits=bits,
                      bpp=bpp(n_params * bits, n, model.config.height, model.config.width))


def quantized_eval(qckpt: QuantizedCheckpoint | NervModel, frames) -> EvalReport:
    """Metrics of the dequantized model; a float model evaluates as-is at
    32 bits (the bits=32 passthrough path)."""
    frames = list(frames)
    if isinstance(qckpt, NervModel):
        return evaluate_model(qckpt, frames, bits=32)
    return evaluate_model(model_from_quantized(qckpt), frames, bits=qckpt.bits)
