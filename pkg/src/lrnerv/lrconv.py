"""Trainable low-rank separable convolution layers.

A dense k x k convolution (C_in -> C_out) is replaced by a vertical k x 1
projection down to r channels followed by a horizontal 1 x k expansion back
to C_out, with no nonlinearity in between: the pair is a single linear
operator whose effective kernel has channel-spatial rank at most r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, conv2d

Array = np.ndarray


def select_rank(c_in: int, c_out: int, rho: float) -> int:
    """Bottleneck rank: ceil(rho * min(c_in, c_out)), always >= 1."""
    if c_in < 1 or c_out < 1:
        raise ValueError(f"channel counts must be >= 1, got ({c_in}, {c_out})")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return max(1, math.ceil(rho * min(c_in, c_out)))


def lr_param_count(c_in: int, c_out: int, k: int, r: int) -> int:
    """Weight count of the factorized pair, k*r*(c_in + c_out); bias excluded."""
    return k * r * (c_in + c_out)


def dense_param_count(c_in: int, c_out: int, k: int) -> int:
    """Weight count of the dense k x k convolution, k^2*c_in*c_out; bias excluded."""
    return k * k * c_in * c_out


def param_ratio(c_in: int, c_out: int, k: int, r: int) -> float:
    """lr/dense = r*(c_in + c_out) / (k*c_in*c_out)."""
    return lr_param_count(c_in, c_out, k, r) / dense_param_count(c_in, c_out, k)


@dataclass(frozen=True)
class FactorizationPlan:
    """Which decoder stages get factorized, and with what bottleneck ratio."""

    stages: frozenset[int] = frozenset()
    rho: float = 0.25

    @classmethod
    def parse(cls, spec: str, rho: float = 0.25) -> "FactorizationPlan":
        """Parse a stage-set label: '-' (dense), '4', or a range like '3-4'.

        Ranges are contiguous and order-insensitive ('4-3' == '3-4'); the
        ASCII hyphen and the typographic minus both denote the empty set
        when standing alone.
        """
        text = spec.strip().replace("−", "-")
        if text in ("", "-", "none", "dense"):
            return cls(frozenset(), rho)
        if "-" in text:
            a, b = (int(p) for p in text.split("-"))
            lo, hi = min(a, b), max(a, b)
            return cls(frozenset(range(lo, hi + 1)), rho)
        return cls(frozenset({int(text)}), rho)

    def label(self) -> str:
        if not self.stages:
            return "-"
        lo, hi = min(self.stages), max(self.stages)
        if self.stages != frozenset(range(lo, hi + 1)):
            return ",".join(str(i) for i in sorted(self.stages))
        return str(lo) if lo == hi else f"{lo}-{hi}"

    def validate(self, n_stages: int) -> None:
        bad = [i for i in self.stages if not 0 <= i < n_stages]
        if bad:
            raise ValueError(f"stage indices {bad} outside 0..{n_stages - 1}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")


@dataclass
class LRConvLayer:
    """Factorized pair: w1 (r, c_in, k, 1) projection, w2 (c_out, r, 1, k)
    reconstruction, plus one bias per output channel on the w2 side."""

    w1: Tensor
    w2: Tensor
    bias: Tensor
    rank: int
    rho: float

    @property
    def c_in(self) -> int:
        return self.w1.shape[1]

    @property
    def c_out(self) -> int:
        return self.w2.shape[0]

    @property
    def k(self) -> int:
        return self.w1.shape[2]


def init_lrconv(c_in: int, c_out: int, k: int, rho: float, seed) -> LRConvLayer:
    """Fan-in-scaled uniform init (variance 2/fan_in), zero bias.

    ``seed`` may be an int or a numpy SeedSequence; the layer is a
    deterministic function of it.
    """
    r = select_rank(c_in, c_out, rho)
    rng = np.random.default_rng(seed)
    w1 = he_uniform(rng, (r, c_in, k, 1), fan_in=c_in * k)
    w2 = he_uniform(rng, (c_out, r, 1, k), fan_in=r * k)
    bias = Tensor(np.zeros(c_out), requires_grad=True)
    return LRConvLayer(w1=w1, w2=w2, bias=bias, rank=r, rho=rho)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    # U(-a, a) with a = sqrt(6/fan_in) has variance 2/fan_in; values are
    # snapped to float32 resolution so checkpoints round-trip bitwise
    a = math.sqrt(6.0 / fan_in)
    w = rng.uniform(-a, a, size=shape).astype(np.float32).astype(np.float64)
    return Tensor(w, requires_grad=True)


def lrconv_forward(layer: LRConvLayer, x) -> Tensor:
    """Vertical then horizontal pass; spatial size preserved for odd k.

    The intermediate map has ``layer.rank`` channels; the bias is added once,
    after the reconstruction convolution.
    """
    k = layer.k
    z = conv2d(x, layer.w1, bias=None, pad=(k // 2, 0))
    return conv2d(z, layer.w2, bias=layer.bias, pad=(0, k // 2))


def compose_effective_kernel(layer: LRConvLayer) -> Array:
    """Dense (c_out, c_in, k, k) kernel equivalent to the factorized pair.

    W_eff[o, i, u, v] = sum_q w2[o, q, 0, v] * w1[q, i, u, 0]; together with
    the layer bias this reproduces lrconv_forward exactly under zero padding.
    """
    w1 = layer.w1.data[:, :, :, 0]  # (r, c_in, k)
    w2 = layer.w2.data[:, :, 0, :]  # (c_out, r, k)
    return np.einsum("qiu,oqv->oiuv", w1, w2, optimize=True)
