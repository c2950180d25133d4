"""Simulate, retrieve, extract and invert the point-source problem end to end.

Example::

    python3 scripts/run_ip1_pipeline.py --grid-n 16 --n-angles 12 --n-offsets 12 --out runs/small

Defaults reproduce the desk-scale run (several minutes on one core).
"""

from __future__ import annotations

import argparse
import time

from phaseless.pipeline import ExperimentConfig, run_full_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON experiment config to start from")
    ap.add_argument("--out", default="runs/ip1")
    ap.add_argument("--grid-n", type=int)
    ap.add_argument("--n-angles", type=int)
    ap.add_argument("--n-offsets", type=int)
    ap.add_argument("--k-max", type=float)
    ap.add_argument("--h-t", type=float)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = base.with_overrides(
        out=args.out, grid_n=args.grid_n, n_angles=args.n_angles, n_offsets=args.n_offsets,
        k_max=args.k_max, h_t=args.h_t, seed=args.seed,
    )
    t0 = time.perf_counter()
    _, report = run_full_pipeline(cfg, cfg.out)
    print(report.to_text())
    print(f"run directory: {cfg.out}  ({time.perf_counter() - t0:.1f} s)")
    for name, value in sorted(report.errors.items()):
        print(f"{name:32s} {value:.4g}")


if __name__ == "__main__":
    main()
