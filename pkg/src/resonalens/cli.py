"""Command-line entry point.

Subcommands:

* ``resonalens run <config> [--out DIR] [--jobs N] [--check]``
  run the configured study, write rows.csv / summary.csv / tracked
  traces, print the fitted rate and the per-study checks.
* ``resonalens validate <config>``
  parse and validate without running.
* ``resonalens oracle --n N --rb X``
  print the closed-form resonances of mode N for boundary radius X,
  one ``re im`` pair per line.

Exit codes: 0 success, 1 invalid config or parameters, 2 numerical or
construction failure, 3 a ``--check`` predicate failed.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConstructionError, NumericalError, ValidationError
from .oracle import hankel_resonances
from .studies import emit_report, load_config, run_study, validate_config


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad arguments; route through the
    # package's own convention (1 = invalid input) instead
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resonalens",
                     description="Radial complex-scaling resonance studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a study config and write its reports")
    run_p.add_argument("config", help="path to a TOML study description")
    run_p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    run_p.add_argument("--jobs", type=int, default=1, help="worker threads for sweep points")
    run_p.add_argument("--check", action="store_true",
                       help="exit 3 unless every study check passes")

    val_p = sub.add_parser("validate", help="validate a config without running it")
    val_p.add_argument("config", help="path to a TOML study description")

    orc_p = sub.add_parser("oracle", help="print closed-form resonances for one mode")
    orc_p.add_argument("--n", type=int, required=True, help="mode index")
    orc_p.add_argument("--rb", type=float, required=True, help="boundary radius")
    return parser


def _cmd_run(args) -> int:
    plan = validate_config(load_config(args.config))
    report = run_study(plan, jobs=args.jobs)
    outdir = args.out if args.out is not None else (plan.outdir or "out")
    paths = emit_report(report, outdir)
    print(f"{report.study} study, mode n={report.n}: "
          f"{len(report.rows)} rows -> {outdir}")
    if report.fit is not None:
        print(f"fit: {report.fit.model} slope={report.fit.slope:.6g} "
              f"r2={report.fit.r_squared:.6g} over {report.fit.n_points} points")
    for path in paths:
        print(f"wrote {path}")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"check {check.name}: {status} ({check.detail})")
    if args.check and not report.passed:
        return 3
    return 0


def _cmd_validate(args) -> int:
    plan = validate_config(load_config(args.config))
    print(f"config ok: {plan.study} study, {plan.profile.kind} profile, "
          f"mode n={plan.problem['n']}")
    return 0


def _cmd_oracle(args) -> int:
    omegas = hankel_resonances(args.n, args.rb)
    for w in omegas:
        print("%.17g %.17g" % (w.real, w.imag))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_oracle(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
