"""Command line driver.

    fracshe solve --config c.json --out traj.csv
    fracshe converge-space --config c.json --out rates.csv

Exit status: 0 on success, 1 on a usage or configuration error, 2 on a
numerical failure.  Each run writes ``<out>.manifest.json`` beside its output.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from .fem import EigenSolverError
from .harness import (
    ConfigError,
    ExperimentConfig,
    build_manifest,
    converge,
    load_config,
    mc_strong,
    mesh_summary,
    validate_deterministic,
    write_manifest,
)
from .noise import sample_path, write_path
from .stepper import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
SUBCOMMANDS = ("solve", "validate-deterministic", "converge-space", "converge-time", "mc-strong")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class NumericalFailure(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracshe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int, help="override master_seed (unsigned 64-bit)")
        p.add_argument("--samples", type=int, help="override n_samples")
        p.add_argument("--workers", type=int, help="worker processes for Monte Carlo")
        if name == "solve":
            p.add_argument("--stride", type=int, default=1, help="write every n-th time row")
            p.add_argument("--path-dump", type=Path, help="binary dump of the noise path")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {"kind": args.command}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["master_seed"] = args.seed
    if args.samples is not None:
        changes["n_samples"] = args.samples
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.command == "converge-space":
        changes["axis"] = "h"
    elif args.command == "converge-time":
        changes["axis"] = "tau"
    try:
        return replace(config, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_finite(values):
    if not np.all(np.isfinite(values)):
        raise NumericalFailure("non-finite values in the solution")


def _solve(config: ExperimentConfig, args, started) -> None:
    scheme = config.scheme
    out = args.out or Path("trajectory.csv")
    path = None
    outputs = [out]
    if not scheme.sigma.is_zero or args.path_dump:
        path = sample_path(scheme.covariance, scheme.k_steps, scheme.T, config.master_seed, 0)
    traj = run(scheme, path if not scheme.sigma.is_zero else None)
    _check_finite(traj.values)
    traj.write_csv(out, stride=args.stride)
    if args.path_dump:
        write_path(path, args.path_dump)
        outputs.append(args.path_dump)
    results = {"mesh": mesh_summary(scheme)}
    write_manifest(_manifest_path(out), build_manifest(config.to_dict(), outputs, started, results))


def _study(config: ExperimentConfig, args, started) -> None:
    out = args.out or Path("results.csv")
    if config.kind == "validate-deterministic":
        report, _ = validate_deterministic(config)
    elif config.kind == "mc-strong":
        report = mc_strong(config)
    else:
        report = converge(config)
    _check_finite([lv.error for lv in report.levels])
    report.write_csv(out)
    summary = report.summary()
    summary.pop("sample_errors", None)
    summary["mesh"] = mesh_summary(config.scheme)
    write_manifest(_manifest_path(out), build_manifest(config.to_dict(), [out], started, summary))


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    started = time.time()
    try:
        config = _apply_overrides(load_config(args.config), args)
        if config.kind == "solve":
            _solve(config, args, started)
        else:
            _study(config, args, started)
    except (NumericalFailure, LinAlgError, EigenSolverError, ArithmeticError) as exc:
        print(f"fracshe: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # ConfigError, and inconsistencies found while setting up the run
        print(f"fracshe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
