#!/usr/bin/env python3
"""End-to-end desk-scale study: generate the toy clip, sweep factorization
plans, and emit the RD table, complexity CSVs, and SVG plots.

Usage: python scripts/run_toy_rd_study.py [output_dir] [--steps N] [--seed S]

Expect roughly 10-15 minutes at the default 1600 steps; pass --steps 200 for
a fast smoke run.
"""

import argparse
import sys
from pathlib import Path

from lrnerv.cli import main as cli_main
from lrnerv.video import synthetic_video, write_video


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", nargs="?", default="results/toy_study")
    ap.add_argument("--steps", type=int, default=1600)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "video" / "video.txt"
    write_video(manifest, synthetic_video(8, 64, 128))

    config = str(Path(__file__).resolve().parent.parent / "configs" / "toy.cfg")
    rc = cli_main(["rd-sweep", "--config", config, "--frames", str(manifest),
                   "--stages-lr=-;4;3-4;2-4;1-4;0-4",
                   "--steps", str(args.steps), "--seed", str(args.seed),
                   "--csv", str(out / "rd_points.csv"),
                   "--svg", str(out / "rd_curve.svg"),
                   "--out", str(out / "checkpoints")])
    if rc != 0:
        return rc
    for plan in ("-", "4", "0-4"):
        tag = plan.replace("-", "_") or "dense"
        cli_main(["analyze", "--config", config, f"--stages-lr={plan}",
                  "--csv", str(out / f"complexity_{tag or 'dense'}.csv")])
    print(f"\nstudy artifacts in {out}/: rd_points.csv, rd_curve.svg, "
          f"rd_curve-params.svg, complexity_*.csv, checkpoints/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
