"""Command-line entry point: ``kinetic-fp {simulate,sweep,oracle-check,report,acceptance}``.

Exit codes: 0 success, 1 numerical abort (non-finite values), 2 configuration
error, 3 one or more acceptance criteria failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    config_hash,
    epsilon_sweep,
    load_config,
    oracle_check,
    run_scenario,
    summarize_run,
)
from .positivity import write_report
from .solver import NumericalAbort

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _print_json(data: dict) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    summary = run_scenario(cfg, args.output)
    _print_json(summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    eps = [float(e) for e in args.epsilons.split(",")] if args.epsilons else None
    result = epsilon_sweep(cfg, eps, args.workers)
    result["config_hash"] = config_hash(cfg)
    out = Path(args.output or cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_report(result, out / "sweep.json")
    for row in result["rows"]:
        print(f"eps={row['epsilon']:<10g} sup_error={row['sup_error']:.6e} steps={row['steps']}")
    if "fit" in result:
        print(f"power-law fit: exponent={result['fit']['rate']:.4f} r2={result['fit']['r_squared']:.4f}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = load_config(args.config)
    result = oracle_check(cfg)
    result["config_hash"] = config_hash(cfg)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        write_report(result, out / "oracle_check.json")
    for row in result["rows"]:
        print(f"dt={row['dt']:<10g} rel_Linf={row['rel_linf']:.3e} rel_L2dm={row['rel_l2_dm']:.3e}")
    for o in result["richardson_orders"]:
        print(f"richardson order: {o:.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    _print_json(summarize_run(args.run_dir))
    return EXIT_OK


def cmd_acceptance(args) -> int:
    from .acceptance import CRITERIA, run_criterion

    wanted = [c.strip() for c in args.only.split(",")] if args.only else list(CRITERIA)
    failed = 0
    for key in wanted:
        if key not in CRITERIA:
            raise ConfigError("--only", f"unknown criterion {key!r}")
        res = run_criterion(key)
        print(res.line(), flush=True)
        failed += not res.passed
    return EXIT_OK if failed == 0 else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinetic-fp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configured scenario")
    s.add_argument("config")
    s.add_argument("-o", "--output", help="output directory (overrides run.output_dir)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="kinetic vs fast-diffusion error across epsilon")
    s.add_argument("config")
    s.add_argument("--epsilons", help="comma-separated list (overrides sweep.epsilons)")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle-check", help="Kolmogorov-mode solver against the exact propagator")
    s.add_argument("config")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_oracle_check)

    s = sub.add_parser("report", help="summarize a finished run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("acceptance", help="run the acceptance criteria")
    s.add_argument("--only", help="comma-separated criterion ids, e.g. 1,3,7")
    s.set_defaults(func=cmd_acceptance)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"error: numerical abort at step {exc.step_index}: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
