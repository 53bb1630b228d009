"""Command line: ``run <config>``, ``validate <config>``, ``report <dir>``.

Exit status is 0 only when every gate of the run (or stored report) passes.
Worker threads are set with the ``SPDE_THREADS`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (ConfigError, DomainError, FlowIntegrityError, NumericError, PathParseError, SolverError,
                     StiffnessError, UsageError)
from .experiments import ExperimentConfig, render_csv, run, thread_count

EXIT_OK, EXIT_GATES, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _print_gates(gates: dict, out) -> None:
    for name in sorted(gates):
        out.write(f"  {'PASS' if gates[name] else 'FAIL'}  {name}\n")


def cmd_run(args, out) -> int:
    thread_count()  # reject a malformed SPDE_THREADS before any work
    cfg = ExperimentConfig.load(args.config)
    if args.output:
        cfg.output = os.path.abspath(args.output)
    report = run(cfg)
    out.write(f"{cfg.kind} '{cfg.name}': {'passed' if report.passed else 'FAILED'} -> {cfg.output_dir()}\n")
    _print_gates(report.gates, out)
    for note in report.notes:
        out.write(f"  note: {note}\n")
    return EXIT_OK if report.passed else EXIT_GATES


def cmd_validate(args, out) -> int:
    thread_count()
    cfg = ExperimentConfig.load(args.config)
    out.write(f"valid {cfg.kind} config '{cfg.name}'\n")
    return EXIT_OK


def cmd_report(args, out) -> int:
    path = os.path.join(args.directory, "metrics.json")
    if not os.path.exists(path):
        raise ConfigError(f"no metrics.json in {args.directory}")
    with open(path, encoding="utf-8") as fh:
        metrics = json.load(fh)
    files = render_csv(metrics, args.directory)
    out.write(f"{metrics.get('kind')} '{metrics.get('name')}': rendered {', '.join(files)}\n")
    gates = metrics.get("gates", {})
    _print_gates(gates, out)
    return EXIT_OK if gates and all(gates.values()) else EXIT_GATES


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transport_spde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config and write its report")
    r.add_argument("config")
    r.add_argument("--output", help="override the output directory")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config without solving")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    rp = sub.add_parser("report", help="re-render CSV summaries of a report directory")
    rp.add_argument("directory")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, PathParseError, DomainError, UsageError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (SolverError, NumericError, FlowIntegrityError, StiffnessError) as exc:
        sys.stderr.write(f"solver error: {exc}\n")
        return EXIT_SOLVER


def main_entry() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
