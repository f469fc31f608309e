"""Command-line surface: train / eval / analyze / quantize / flicker /
rd-sweep / plot, all operating on config files, PPM frame manifests, and
LRNV checkpoints."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import model_report, report_csv, report_text
from .config import load_config
from .lrconv import FactorizationPlan
from .metrics import flicker_ratio, resolve_distance
from .model import TrainingDiverged, decode_video, fit
from .quantize import quantize_model, quantized_eval
from .svg import Series, line_plot
from .video import load_video

RD_CSV_COLUMNS = ("plan", "precision", "bpp", "psnr", "ms_ssim", "gflops", "params")
FLICKER_CSV_COLUMNS = ("t", "d_recon", "d_gt", "ratio")
EVAL_CSV_COLUMNS = ("frame", "psnr", "ms_ssim")


def _g(x: float) -> str:
    return format(x, ".10g")


def _resolve_plan(config, args) -> FactorizationPlan:
    rho = args.rho if args.rho is not None else config.plan.rho
    if args.stages_lr is not None:
        return FactorizationPlan.parse(args.stages_lr, rho=rho)
    return FactorizationPlan(config.plan.stages, rho=rho)


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


def cmd_train(args) -> int:
    config = load_config(args.config).with_plan(_resolve_plan(load_config(args.config), args))
    frames = load_video(args.frames)
    model, report = fit(frames, config, steps=args.steps, seed=args.seed)
    save_checkpoint(model, args.out)
    if args.csv:
        out = io.StringIO()
        out.write("step,loss\n")
        for i, l in enumerate(report.losses):
            out.write(f"{i},{_g(l)}\n")
        _write(args.csv, out.getvalue())
    mean_psnr = float(np.mean(report.final_psnr)) if report.final_psnr else float("nan")
    print(f"trained plan {config.plan.label()} for {report.steps} steps "
          f"in {report.wall_clock:.1f}s; mean PSNR {mean_psnr:.2f} dB; saved {args.out}")
    return 0


def cmd_eval(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    frames = load_video(args.frames)
    target = loaded.to_quantized() if loaded.kind == "int8" else loaded.to_model()
    report = quantized_eval(target, frames)
    if args.csv:
        out = io.StringIO()
        out.write(",".join(EVAL_CSV_COLUMNS) + "\n")
        for i, (p, s) in enumerate(zip(report.per_frame_psnr, report.per_frame_ms_ssim)):
            out.write(f"{i},{_g(p)},{_g(s)}\n")
        _write(args.csv, out.getvalue())
    print(f"{args.checkpoint} ({loaded.kind}, {report.bits} bits/weight): "
          f"mean PSNR {report.mean_psnr:.3f} dB, mean MS-SSIM {report.mean_ms_ssim:.5f}, "
          f"bpp {report.bpp:.5f}")
    return 0


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    plan = _resolve_plan(config, args)
    report = model_report(config, plan)
    sys.stdout.write(report_text(report))
    if args.csv:
        _write(args.csv, report_csv(report))
    return 0


def cmd_quantize(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    if loaded.kind == "int8":
        print("input is already an INT8 checkpoint", file=sys.stderr)
        return 1
    model = loaded.to_model()
    quantized = quantize_model(model, bits=args.bits)
    save_checkpoint(quantized, args.out)
    label = "float passthrough" if args.bits == 32 else f"int{args.bits}"
    print(f"wrote {label} checkpoint to {args.out}")
    return 0


def cmd_flicker(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    frames = load_video(args.frames)
    model = loaded.to_model()
    recon = decode_video(model, len(frames))
    report = flicker_ratio(recon, frames, resolve_distance(args.distance))
    if args.csv:
        out = io.StringIO()
        out.write(",".join(FLICKER_CSV_COLUMNS) + "\n")
        for t, dr, dg, ratio in report.csv_rows():
            out.write(f"{t},{_g(dr)},{_g(dg)},{_g(ratio)}\n")
        _write(args.csv, out.getvalue())
    flag = f" ({len(report.static_pairs)} static-content pairs)" if report.static_pairs else ""
    print(f"mean flicker ratio [{report.distance}]: {report.mean_ratio:.4f}{flag}")
    return 0


def _sweep_plan(config, plan, frames, steps, seed, bits, out_dir):
    cfg = config.with_plan(plan)
    comp = model_report(cfg, plan)
    model, _ = fit(frames, cfg, steps=steps, seed=seed)
    if out_dir:
        save_checkpoint(model, Path(out_dir) / f"plan_{plan.label().replace('-', '_') or 'dense'}.lrnv")
    rows = []
    fp = quantized_eval(model, frames)
    rows.append((plan.label(), "f32", fp.bpp, fp.mean_psnr, fp.mean_ms_ssim,
                 comp.total_gflops, comp.total_params))
    qp = quantized_eval(quantize_model(model, bits=bits), frames)
    rows.append((plan.label(), f"int{bits}", qp.bpp, qp.mean_psnr, qp.mean_ms_ssim,
                 comp.total_gflops, comp.total_params))
    return rows


def cmd_rd_sweep(args) -> int:
    config = load_config(args.config)
    frames = load_video(args.frames)
    rho = args.rho if args.rho is not None else config.plan.rho
    specs = [s for s in args.stages_lr.split(";") if s.strip() or s == ""]
    plans = [FactorizationPlan.parse(s, rho=rho) for s in specs]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)

    results: dict[int, list[tuple]] = {}
    failures: list[str] = []

    def run(i_plan):
        i, plan = i_plan
        try:
            return i, _sweep_plan(config, plan, frames, args.steps, args.seed, args.bits, args.out)
        except TrainingDiverged as e:
            print(f"plan {plan.label()}: training diverged ({e}); skipping", file=sys.stderr)
            failures.append(plan.label())
            return i, []

    if args.parallel > 1:
        # results are collected in plan order either way, but interleaved BLAS
        # scheduling is outside this program's control; the sequential default
        # is the reproducibility-guaranteed path
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            for i, rows in pool.map(run, enumerate(plans)):
                results[i] = rows
    else:
        for i, plan in enumerate(plans):
            i, rows = run((i, plan))
            results[i] = rows

    out = io.StringIO()
    out.write(",".join(RD_CSV_COLUMNS) + "\n")
    all_rows = [row for i in range(len(plans)) for row in results.get(i, ())]
    for plan_label, precision, bpp_v, psnr_v, ms_v, gf, params in all_rows:
        out.write(f"{plan_label},{precision},{_g(bpp_v)},{_g(psnr_v)},{_g(ms_v)},"
                  f"{_g(gf)},{params}\n")
    csv_text = out.getvalue()
    _write(args.csv, csv_text)
    if not args.csv:
        sys.stdout.write(csv_text)

    if args.svg and all_rows:
        by_prec: dict[str, list[tuple]] = {}
        for row in all_rows:
            by_prec.setdefault(row[1], []).append(row)
        rd_series = [Series(xs=[r[2] for r in rows], ys=[r[3] for r in rows], label=prec,
                            marker_only=True, point_labels=[r[0] for r in rows])
                     for prec, rows in by_prec.items()]
        _write(args.svg, line_plot(rd_series, title="rate-distortion sweep",
                                   xlabel="bpp", ylabel="PSNR (dB)"))
        first = by_prec[next(iter(by_prec))]
        comp_series = [Series(xs=[r[5] for r in first], ys=[r[6] / 1e6 for r in first],
                              label="plans", point_labels=[r[0] for r in first])]
        comp_path = _with_suffix(args.svg, "-params")
        _write(comp_path, line_plot(comp_series, title="model size vs compute",
                                    xlabel="GFLOPs per frame", ylabel="params (M)"))
    if failures:
        return 1
    return 0


def _with_suffix(path: str, tag: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + tag + p.suffix))


def cmd_plot(args) -> int:
    with open(args.csvfile, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        print("empty CSV", file=sys.stderr)
        return 1
    for col in (args.x, args.y):
        if col not in rows[0]:
            print(f"column {col!r} not in {sorted(rows[0])}", file=sys.stderr)
            return 1
    groups: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        key = row.get(args.group, "") if args.group else ""
        try:
            groups.setdefault(key, []).append((float(row[args.x]), float(row[args.y])))
        except ValueError:
            print(f"non-numeric value in row {row!r}", file=sys.stderr)
            return 1
    series = [Series(xs=[p[0] for p in pts], ys=[p[1] for p in pts], label=key)
              for key, pts in groups.items()]
    _write(args.svg, line_plot(series, xlabel=args.x, ylabel=args.y))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrnerv",
        description="Low-rank separable convolutions in a NeRV-style video decoder: "
                    "training, complexity analysis, INT8 quantization, RD and flicker studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=False, frames=False, ckpt=False):
        if config:
            p.add_argument("--config", required=True, help="decoder config file")
        if frames:
            p.add_argument("--frames", required=True, help="video manifest file")
        if ckpt:
            p.add_argument("checkpoint", help="LRNV checkpoint path")

    p = sub.add_parser("train", help="overfit a decoder to a clip")
    add_common(p, config=True, frames=True)
    p.add_argument("--stages-lr", default=None, help="stage set to factorize, e.g. '4' or '3-4'")
    p.add_argument("--rho", type=float, default=None, help="bottleneck ratio (default 0.25)")
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--csv", default=None, help="write per-step loss log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="PSNR/MS-SSIM of a checkpoint against a clip")
    add_common(p, frames=True, ckpt=True)
    p.add_argument("--csv", default=None, help="write per-frame metrics")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("analyze", help="analytic params/MACs/GFLOPs report (no frames needed)")
    add_common(p, config=True)
    p.add_argument("--stages-lr", default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("quantize", help="post-training weight quantization of a checkpoint")
    add_common(p, ckpt=True)
    p.add_argument("--bits", type=int, default=8, choices=(8, 32))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("flicker", help="normalized temporal flicker ratio of a checkpoint")
    add_common(p, frames=True, ckpt=True)
    p.add_argument("--distance", default="ssim", help="'ssim' or 'lpips-file:<path>'")
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=cmd_flicker)

    p = sub.add_parser("rd-sweep", help="train one model per plan, emit RD points")
    add_common(p, config=True, frames=True)
    p.add_argument("--stages-lr", default="-;4;3-4;2-4;1-4;0-4",
                   help="semicolon-separated stage sets ('-' = dense baseline); "
                        "use the --stages-lr=-;4;... form so the shell token "
                        "does not look like an option")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bits", type=int, default=8, help="bit width for the quantized points")
    p.add_argument("--csv", default=None, help="RD points output (stdout if omitted)")
    p.add_argument("--svg", default=None, help="also plot PSNR-vs-bpp (plus a '-params' SVG)")
    p.add_argument("--out", default=None, help="directory for per-plan checkpoints")
    p.add_argument("--parallel", type=int, default=1,
                   help="train plans concurrently (sequential default is the "
                        "reproducibility-guaranteed path)")
    p.set_defaults(fn=cmd_rd_sweep)

    p = sub.add_parser("plot", help="plot any emitted CSV")
    p.add_argument("csvfile")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--group", default=None, help="one series per distinct value of this column")
    p.add_argument("--svg", required=True)
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
