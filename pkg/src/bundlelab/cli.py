"""Command-line front end.

Subcommands: ``run`` executes scenario configurations and writes artifacts,
``compare`` builds a convergence table from saved reports, ``selftest``
executes the full invariant suite, ``dump-kernel`` writes a kernel binary.
Exit codes: 0 all invariants within tolerance, 1 violation, 2 configuration
error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import green, scenarios, selftest


def _budget(args) -> float | None:
    if args.budget_mb is not None:
        return args.budget_mb
    env = os.environ.get(green.BUDGET_ENV_VAR)
    return float(env) if env else None


def cmd_run(args) -> int:
    exit_code = 0
    for config in args.configs:
        sc = scenarios.Scenario.from_json(config)
        report = scenarios.run(sc, outdir=args.outdir, plots=not args.no_plots,
                               budget_mb=_budget(args))
        dest = Path(args.outdir) / sc.name
        print(f"{sc.name}: {len(report.deviations)} comparisons, "
              f"{len(report.violations)} violations -> {dest}")
        for line in report.violations:
            print(f"  violation: {line}")
        if report.violations:
            exit_code = 1
    return exit_code


def cmd_compare(args) -> int:
    reports = [scenarios.RunReport.from_json(p) for p in args.reports]
    rows = scenarios.compare_reports(reports)
    scenarios.write_comparison_csv(args.out, rows)
    print(f"wrote {len(rows)} comparison rows -> {args.out}")
    return 0


def cmd_selftest(args) -> int:
    indices = args.criterion if args.criterion else None
    results = selftest.run_selftest(indices)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def cmd_dump_kernel(args) -> int:
    sc = scenarios.Scenario.from_json(args.config)
    A = scenarios.build_potential(sc)
    m = scenarios.resolve_mass(sc)
    if sc.equation == "dirac":
        kern = green.dirac_green(A, m)
    elif sc.equation == "schrodinger":
        from .waveeq import schrodinger_hamiltonian
        h = schrodinger_hamiltonian(sc.lattice, m, A, hbar=A.hbar)
        kern = green.schrodinger_green(h, sc.lattice, hbar=A.hbar, c=A.c)
    elif sc.equation in ("kg-2comp", "kg-scalar"):
        kern = green.kg_green_tilde(A, m) if sc.equation == "kg-2comp" \
            else green.kg_green(A, m)
    else:
        raise scenarios.ConfigError(f"no kernel family for equation '{sc.equation}'")
    green.dump_kernel(kern, args.out, budget_mb=_budget(args))
    print(f"wrote {sc.equation} kernel ({sc.lattice.nt}x{sc.lattice.nx}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bundlelab",
        description="lattice laboratory for relativistic wave equations in the "
                    "conventional and frame-field pictures")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute scenario configurations")
    p_run.add_argument("configs", nargs="+", help="scenario JSON files")
    p_run.add_argument("--outdir", default="runs", help="artifact directory (default: runs)")
    p_run.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    p_run.add_argument("--budget-mb", type=float, default=None,
                       help=f"kernel memory budget (or ${green.BUDGET_ENV_VAR})")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare", help="convergence table from saved reports")
    p_cmp.add_argument("reports", nargs="+", help="report.json files of one family")
    p_cmp.add_argument("--out", default="comparison.csv", help="output CSV path")
    p_cmp.set_defaults(fn=cmd_compare)

    p_self = sub.add_parser("selftest", help="run the acceptance criteria")
    p_self.add_argument("--criterion", type=int, action="append",
                        help="run only this criterion (repeatable)")
    p_self.set_defaults(fn=cmd_selftest)

    p_dump = sub.add_parser("dump-kernel", help="write a kernel binary dump")
    p_dump.add_argument("config", help="scenario JSON file")
    p_dump.add_argument("out", help="output path")
    p_dump.add_argument("--budget-mb", type=float, default=None,
                        help=f"kernel memory budget (or ${green.BUDGET_ENV_VAR})")
    p_dump.set_defaults(fn=cmd_dump_kernel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except scenarios.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except green.KernelBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
