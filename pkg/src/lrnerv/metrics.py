"""Frame quality metrics and the normalized temporal-flicker ratio.

All functions take (3, H, W) float arrays with values in [0, 1]. The flicker
ratio compares adjacent-frame perceptual distances of a reconstruction
against those of the ground truth; the frame-pair distance is pluggable,
defaulting to an SSIM-based one since no pretrained perceptual weights ship
with the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.ndimage import correlate1d

Array = np.ndarray

PSNR_CAP_DB = 99.0
_MSE_FLOOR = 1e-10

_C1 = 0.01 ** 2
_C2 = 0.03 ** 2
_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW = 11


def mse(a: Array, b: Array) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: Array, b: Array) -> float:
    """10*log10(1/MSE) for unit data range, capped at 99 dB near identity."""
    err = mse(a, b)
    if err < _MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / err))


def _gaussian_1d(n: int = _WINDOW, sigma: float = 1.5) -> Array:
    x = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _blur_valid(x: Array, g: Array) -> Array:
    # separable filter along both spatial axes, then crop to the valid region
    m = len(g) // 2
    y = correlate1d(x, g, axis=1, mode="constant")
    y = correlate1d(y, g, axis=2, mode="constant")
    return y[:, m:-m, m:-m]


def _ssim_cs(a: Array, b: Array) -> tuple[float, float]:
    g = _gaussian_1d()
    mu_a = _blur_valid(a, g)
    mu_b = _blur_valid(b, g)
    var_a = _blur_valid(a * a, g) - mu_a ** 2
    var_b = _blur_valid(b * b, g) - mu_b ** 2
    cov = _blur_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + _C1) / (mu_a ** 2 + mu_b ** 2 + _C1)
    cs = (2 * cov + _C2) / (var_a + var_b + _C2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a: Array, b: Array) -> float:
    """Single-scale SSIM, 11x11 Gaussian window sigma 1.5, valid windows,
    per-channel maps averaged together."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[1], a.shape[2]) < _WINDOW:
        raise ValueError(f"frame smaller than the {_WINDOW}x{_WINDOW} SSIM window")
    return _ssim_cs(a, b)[0]


def _downsample2(x: Array) -> Array:
    h, w = x.shape[1] - x.shape[1] % 2, x.shape[2] - x.shape[2] % 2
    x = x[:, :h, :w]
    return 0.25 * (x[:, 0::2, 0::2] + x[:, 1::2, 0::2] + x[:, 0::2, 1::2] + x[:, 1::2, 1::2])


def ms_ssim(a: Array, b: Array, scales: int = 5) -> float:
    """Multi-scale SSIM with the standard 5-scale weights.

    The scale count auto-reduces until the coarsest scale still fits the
    11x11 window (weights renormalized); frames smaller than the window are
    an error even at a single scale. Contrast terms are clamped at zero
    before the geometric combination.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    min_dim = min(a.shape[1], a.shape[2])
    scales = min(scales, len(_MSSSIM_WEIGHTS))
    while scales > 1 and min_dim < _WINDOW * 2 ** (scales - 1):
        scales -= 1
    if min_dim < _WINDOW:
        raise ValueError(f"frame smaller than the {_WINDOW}x{_WINDOW} SSIM window")
    weights = np.array(_MSSSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()

    value = 1.0
    for s in range(scales):
        sim, cs = _ssim_cs(a, b)
        if s < scales - 1:
            value *= max(cs, 0.0) ** weights[s]
            a, b = _downsample2(a), _downsample2(b)
        else:
            value *= max(sim, 0.0) ** weights[s]
    return float(value)


# ---------------------------------------------------------------------------
# frame-pair distances


@dataclass(frozen=True)
class FramePairDistance:
    """Named nonnegative symmetric distance between two frames."""

    name: str
    fn: Callable[[Array, Array], float]

    def __call__(self, a: Array, b: Array) -> float:
        return float(self.fn(a, b))


def ssim_distance() -> FramePairDistance:
    """(1 - SSIM)/2: zero on identical frames, symmetric, bounded by 1."""
    return FramePairDistance("ssim", lambda a, b: (1.0 - ssim(a, b)) / 2.0)


def lpips_distance_from_file(path: str | Path) -> FramePairDistance:
    """LPIPS-style weighted feature distance with weights from an .npz file.

    The file must contain, for layers l = 0..L-1: ``conv{l}.weight``
    (C_out, C_in, kh, kw), ``conv{l}.bias`` (C_out,), ``lin{l}.weight``
    (C_out,) nonnegative, and optionally ``conv{l}.stride`` (scalar). Each
    layer is conv (same padding, then stride by subsampling) + ReLU; tapped
    features are unit-normalized across channels, squared-differenced,
    weighted by ``lin{l}``, then averaged spatially and summed over layers.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"LPIPS weight file not found: {path} (this distance needs externally "
            "supplied convolutional weights; see README for the .npz schema)")
    archive = np.load(path)
    layers = []
    lins = []
    strides = []
    for l in range(len([k for k in archive.files if k.endswith(".weight") and k.startswith("conv")])):
        w = np.asarray(archive[f"conv{l}.weight"], dtype=np.float64)
        b = np.asarray(archive[f"conv{l}.bias"], dtype=np.float64)
        lin = np.maximum(np.asarray(archive[f"lin{l}.weight"], dtype=np.float64), 0.0)
        stride = int(archive[f"conv{l}.stride"]) if f"conv{l}.stride" in archive.files else 1
        if w.ndim != 4 or b.shape != (w.shape[0],) or lin.shape != (w.shape[0],):
            raise ValueError(f"malformed LPIPS layer {l} in {path}")
        layers.append((w, b))
        lins.append(lin)
        strides.append(stride)
    if not layers:
        raise ValueError(f"no conv layers found in LPIPS weight file {path}")

    def features(x: Array) -> list[Array]:
        feats = []
        for (w, b), stride in zip(layers, strides):
            x = _conv_same(x, w, b)
            x = np.maximum(x, 0.0)[:, ::stride, ::stride]
            feats.append(x)
        return feats

    def distance(a: Array, b: Array) -> float:
        total = 0.0
        for fa, fb, lin in zip(features(np.asarray(a, dtype=np.float64)),
                               features(np.asarray(b, dtype=np.float64)), lins):
            na = fa / np.sqrt(np.sum(fa * fa, axis=0, keepdims=True) + 1e-10)
            nb = fb / np.sqrt(np.sum(fb * fb, axis=0, keepdims=True) + 1e-10)
            diff2 = (na - nb) ** 2
            total += float(np.mean(np.tensordot(lin, diff2, axes=(0, 0))))
        return total

    return FramePairDistance(f"lpips-file:{path.name}", distance)


def _conv_same(x: Array, w: Array, b: Array) -> Array:
    from .tensor import _conv2d_raw  # plain numpy path, no tape involved

    kh, kw = w.shape[2], w.shape[3]
    return _conv2d_raw(x, w, b, (kh // 2, kw // 2))


def resolve_distance(spec: str) -> FramePairDistance:
    """CLI distance spec: 'ssim' or 'lpips-file:<path>'."""
    if spec == "ssim":
        return ssim_distance()
    if spec.startswith("lpips-file:"):
        return lpips_distance_from_file(spec.split(":", 1)[1])
    raise ValueError(f"unknown distance {spec!r}; use 'ssim' or 'lpips-file:<path>'")


# ---------------------------------------------------------------------------
# temporal flicker


@dataclass
class FlickerReport:
    """Per-adjacent-pair distances and their recon/gt ratios.

    ``ratios[t-1]`` compares frames (t, t-1); pairs whose ground-truth
    distance falls at or below ``epsilon`` are listed in ``static_pairs``
    (their ratios are dominated by the epsilon guard, not by content).
    """

    ratios: list[float]
    d_recon: list[float]
    d_gt: list[float]
    mean_ratio: float
    distance: str
    epsilon: float
    static_pairs: list[int] = field(default_factory=list)

    def csv_rows(self) -> list[tuple]:
        return [(t + 1, self.d_recon[t], self.d_gt[t], self.ratios[t])
                for t in range(len(self.ratios))]


def flicker_ratio(recon, gt, distance: FramePairDistance | None = None,
                  epsilon: float = 1e-8) -> FlickerReport:
    """ratio_t = d(recon_t, recon_{t-1}) / max(d(gt_t, gt_{t-1}), epsilon).

    A mean of 1.0 means the reconstruction introduces no temporal
    instability beyond the content's own motion.
    """
    if distance is None:
        distance = ssim_distance()
    recon = [np.asarray(f, dtype=np.float64) for f in recon]
    gt = [np.asarray(f, dtype=np.float64) for f in gt]
    if len(recon) != len(gt):
        raise ValueError(f"sequence lengths differ: {len(recon)} vs {len(gt)}")
    if len(recon) < 2:
        raise ValueError("need at least two frames to measure flicker")
    d_recon, d_gt, ratios, static = [], [], [], []
    for t in range(1, len(recon)):
        dr = distance(recon[t], recon[t - 1])
        dg = distance(gt[t], gt[t - 1])
        d_recon.append(dr)
        d_gt.append(dg)
        ratios.append(dr / max(dg, epsilon))
        if dg <= epsilon:
            static.append(t)
    return FlickerReport(ratios=ratios, d_recon=d_recon, d_gt=d_gt,
                         mean_ratio=float(np.mean(ratios)), distance=distance.name,
                         epsilon=epsilon, static_pairs=static)
