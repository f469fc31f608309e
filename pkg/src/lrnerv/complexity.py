"""Analytic parameter / MAC / GFLOP accounting for decoder configs.

Costs are per decoded frame and cover convolution and linear layers only
(activations, pixel shuffle, and the output sigmoid are excluded, as is
standard). GFLOPs are reported as 2 x MACs / 1e9. Every function here is
pure arithmetic on the config; no model needs to be built or trained.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .lrconv import FactorizationPlan, dense_param_count, lr_param_count, select_rank
from .model import DecoderConfig

COMPLEXITY_CSV_COLUMNS = ("layer", "params", "macs", "gflops", "cumulative")


def conv_macs(c_in: int, c_out: int, kh: int, kw: int, h_out: int, w_out: int) -> int:
    """Multiply-accumulates of one stride-1 convolution at the given output size."""
    if min(c_in, c_out, kh, kw) < 1 or min(h_out, w_out) < 0:
        raise ValueError("conv_macs arguments must be positive (spatial may be zero)")
    return c_out * h_out * w_out * c_in * kh * kw


def linear_macs(d_in: int, d_out: int) -> int:
    return d_in * d_out


def gflops(macs: int) -> float:
    return 2 * macs / 1e9


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int  # stored weight elements, bias included
    macs: int

    @property
    def gflops(self) -> float:
        return gflops(self.macs)


@dataclass(frozen=True)
class ComplexityReport:
    layers: tuple[LayerCost, ...]
    plan_label: str
    total_params: int
    total_macs: int
    baseline_params: int
    baseline_macs: int

    @property
    def total_gflops(self) -> float:
        return gflops(self.total_macs)

    @property
    def baseline_gflops(self) -> float:
        return gflops(self.baseline_macs)

    @property
    def param_reduction_pct(self) -> float:
        return 100.0 * (self.baseline_params - self.total_params) / self.baseline_params

    @property
    def gflops_reduction_pct(self) -> float:
        return 100.0 * (self.baseline_macs - self.total_macs) / self.baseline_macs


def stage_resolutions(config: DecoderConfig) -> list[tuple[int, int]]:
    """Spatial size at which each stage's convolution runs (pre-shuffle),
    plus the head resolution as the final entry."""
    res = []
    h, w = config.stem_h, config.stem_w
    for s in config.stages:
        res.append((h, w))
        h, w = h * s.upscale, w * s.upscale
    res.append((h, w))
    return res


def _layer_costs(config: DecoderConfig, plan: FactorizationPlan) -> list[LayerCost]:
    c0 = config.stem_channels
    stem_out = c0 * config.stem_h * config.stem_w
    layers = [
        LayerCost("stem.fc1", config.stem_width * config.embed_dim + config.stem_width,
                  linear_macs(config.embed_dim, config.stem_width)),
        LayerCost("stem.fc2", stem_out * config.stem_width + stem_out,
                  linear_macs(config.stem_width, stem_out)),
    ]
    res = stage_resolutions(config)
    for i, s in enumerate(config.stages):
        h, w = res[i]
        if i in plan.stages:
            r = select_rank(s.c_in, s.c_out, plan.rho)
            params = lr_param_count(s.c_in, s.c_out, 3, r) + s.c_out
            macs = conv_macs(s.c_in, r, 3, 1, h, w) + conv_macs(r, s.c_out, 1, 3, h, w)
            name = f"stage{i}.lrconv(r={r})"
        else:
            params = dense_param_count(s.c_in, s.c_out, 3) + s.c_out
            macs = conv_macs(s.c_in, s.c_out, 3, 3, h, w)
            name = f"stage{i}.conv3x3"
        layers.append(LayerCost(name, params, macs))
    hh, hw = res[-1]
    layers.append(LayerCost("head.conv3x3",
                            dense_param_count(config.head_channels, 3, 3) + 3,
                            conv_macs(config.head_channels, 3, 3, 3, hh, hw)))
    return layers


def model_report(config: DecoderConfig, plan: FactorizationPlan | None = None) -> ComplexityReport:
    """Per-layer and total costs for ``plan`` (default: the config's own),
    with the all-dense baseline included for the reduction columns."""
    if plan is None:
        plan = config.plan
    plan.validate(len(config.stages))
    layers = _layer_costs(config, plan)
    base = _layer_costs(config, FactorizationPlan(frozenset(), plan.rho))
    return ComplexityReport(
        layers=tuple(layers),
        plan_label=plan.label(),
        total_params=sum(l.params for l in layers),
        total_macs=sum(l.macs for l in layers),
        baseline_params=sum(l.params for l in base),
        baseline_macs=sum(l.macs for l in base),
    )


def param_reduction(config: DecoderConfig, plan: FactorizationPlan) -> float:
    """Whole-model parameter reduction vs the all-dense baseline, percent."""
    return model_report(config, plan).param_reduction_pct


def bpp(total_param_bits: int, n_frames: int, height: int, width: int) -> float:
    """Model bits over total pixels: the NeRV rate convention."""
    if min(total_param_bits, n_frames, height, width) <= 0:
        raise ValueError("bpp arguments must be positive")
    return total_param_bits / (n_frames * height * width)


def report_csv(report: ComplexityReport) -> str:
    out = io.StringIO()
    out.write(",".join(COMPLEXITY_CSV_COLUMNS) + "\n")
    cumulative = 0.0
    for l in report.layers:
        cumulative += l.gflops
        out.write(f"{l.name},{l.params},{l.macs},{l.gflops:.9g},{cumulative:.9g}\n")
    return out.getvalue()


def report_text(report: ComplexityReport) -> str:
    rows = [(l.name, f"{l.params:,}", f"{l.macs:,}", f"{l.gflops:.4f}") for l in report.layers]
    rows.append(("total", f"{report.total_params:,}", f"{report.total_macs:,}",
                 f"{report.total_gflops:.4f}"))
    header = ("layer", "params", "macs", "gflops")
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(4)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(r[i]).rjust(widths[i]) if i else r[i].ljust(widths[0])
                               for i in range(4)))
    lines.append("")
    lines.append(f"plan {report.plan_label}: {report.total_gflops:.4f} GFLOPs, "
                 f"{report.total_params:,} params")
    lines.append(f"vs dense baseline: {report.baseline_gflops:.4f} GFLOPs, "
                 f"{report.baseline_params:,} params "
                 f"({report.gflops_reduction_pct:.2f}% / {report.param_reduction_pct:.2f}% reduction)")
    return "\n".join(lines) + "\n"
