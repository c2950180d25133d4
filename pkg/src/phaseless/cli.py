"""Command-line entry point: ``phaseless <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import io
from .errors import PhaselessError, StageFailed
from .pipeline import (
    ExperimentConfig,
    RunReport,
    evaluate_against_oracle,
    extract_stage,
    invert_stage,
    retrieve_stage,
    run_forward,
    run_full_pipeline,
    run_ip3_ip4_data_study,
    verify_uniqueness,
)

COMMANDS = (
    "simulate",
    "retrieve-phase",
    "extract-lines",
    "invert",
    "verify-uniqueness",
    "ip34-study",
    "full-pipeline",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phaseless", description="Phaseless inverse scattering toolkit")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--out", type=str, help="run directory (default: config 'out')")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n-terms", dest="n_terms", type=int, help="Neumann series terms")
    parser.add_argument("--T", dest="T", type=float, help="time horizon of point-source traces")
    parser.add_argument("--tol-series", dest="tol_series", type=float, help="series convergence tolerance")
    parser.add_argument("--k-max", dest="k_max", type=float, help="upper end of the measured band")
    parser.add_argument(
        "--fit-window", dest="fit_window", type=float, nargs=2, metavar=("K_LO", "K_HI"),
        help="k window of the line-integral fit",
    )
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    fit = tuple(args.fit_window) if args.fit_window else None
    return base.with_overrides(
        out=args.out, seed=args.seed, n_terms=args.n_terms, T=args.T, tol_series=args.tol_series,
        k_max=args.k_max, fit_window=fit,
    )


def _stage_command(command: str, config: ExperimentConfig, out: Path) -> RunReport:
    report = RunReport(command, config.to_dict())
    if command == "retrieve-phase":
        retrieve_stage(config, out, report)
    elif command == "extract-lines":
        extract_stage(config, out, report)
    else:
        q_rec = invert_stage(config, out, report)
        if (out / "sealed").is_dir():
            evaluate_against_oracle(config, out, q_rec, report)
    return report


def run(command: str, config: ExperimentConfig) -> RunReport:
    """Execute one command and write its report into the run directory."""
    out = Path(config.out)
    if command == "simulate":
        return run_forward(config, out)
    if command == "full-pipeline":
        return run_full_pipeline(config, out)[1]
    if command in ("retrieve-phase", "extract-lines", "invert"):
        report = _stage_command(command, config, out)
    elif command == "verify-uniqueness":
        q1 = config.potential()
        q2 = config.potential(alt=config.phantom_alt is not None)
        report = verify_uniqueness(config, q1, q2)[1]
    else:
        report = run_ip3_ip4_data_study(config)
    report.write(out)
    return report


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        Path(config.out).mkdir(parents=True, exist_ok=True)
        io.write_json(Path(config.out) / "config.json", config.to_dict())
        report = run(args.command, config)
    except StageFailed as exc:
        print(f"stage {exc.stage} failed: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return 2
    except PhaselessError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.to_text())
    failed = [name for name, f in report.flags.items() if not f["passed"]]
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
