"""Shared oracles: a direct triple-sum convolution with an honest multiply
counter, and central finite differences for gradient checks. These stay
loop-based and independent of the production im2col/GEMM path."""

from __future__ import annotations

import numpy as np
import pytest


def conv2d_reference(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None,
                     pad: tuple[int, int] = (0, 0)) -> tuple[np.ndarray, int]:
    """Direct convolution: out[co,i,j] = sum_{ci,u,v} w[co,ci,u,v] * xp[ci,i+u,j+v].

    Returns (output, number of scalar multiplications actually executed).
    """
    co, ci, kh, kw = w.shape
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    ho = x.shape[1] + 2 * ph - kh + 1
    wo = x.shape[2] + 2 * pw - kw + 1
    out = np.zeros((co, ho, wo))
    multiplies = 0
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for c in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            acc += w[o, c, u, v] * xp[c, i + u, j + v]
                            multiplies += 1
                out[o, i, j] = acc
        if bias is not None:
            out[o] += bias[o]
    return out, multiplies


def numeric_grad(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function, elementwise."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * eps)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
