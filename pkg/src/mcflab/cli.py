"""Command-line entry point for the flow laboratory.

Subcommands mirror the experiment kinds; every run writes a report bundle
(report.json / report.csv, plus series.csv and trajectory exports where a
distinguished trajectory exists) and exits 0 iff all asserted checks pass.

Config files for ``simulate`` are JSON:

    {"kind": "sharpness-gradient",
     "parameters": {"lam": 2.0, "points_per_probe": 16},
     "output": "runs/sg-lam2"}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .estimates import reports_to_csv
from .experiments import (
    ExperimentSpec,
    run_experiment,
    write_bundle,
)


def _add_common(p):
    p.add_argument("--output", "-o", default=None, help="run directory for reports")
    p.add_argument("--export-trajectory", action="store_true",
                   help="also write trajectory.csv / trajectory.mcfg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcflab",
        description="Graphical mean curvature flow laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an experiment described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--export-trajectory", action="store_true")

    p = sub.add_parser("sharpness-gradient", help="gradient-estimate sharpness run")
    p.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p.add_argument("--points-per-probe", type=int, default=16)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--graded", action="store_true", default=None,
                   help="force the graded grid (auto beyond lambda = 2.2)")
    _add_common(p)

    p = sub.add_parser("sharpness-area", help="area-estimate sharpness run")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--nodes-per-pi", type=int, default=1024)
    p.add_argument("--tol", type=float, default=0.05)
    _add_common(p)

    p = sub.add_parser("estimate-suite", help="random-flow estimate verification")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("convergence", help="soliton-reproduction order study")
    p.add_argument("--problem", choices=("grim-reaper", "translating-pair"),
                   default="grim-reaper")
    p.add_argument("--levels", default="200,400,800",
                   help="comma-separated doubling ladder of strip subdivisions")
    p.add_argument("--scheme", choices=("semi-implicit", "explicit"),
                   default="semi-implicit")
    _add_common(p)

    p = sub.add_parser("report", help="re-emit a run's report in csv or json")
    p.add_argument("--run", required=True, help="run directory containing report.json")
    p.add_argument("--format", choices=("csv", "json"), required=True)

    return parser


def _spec_from_args(args) -> ExperimentSpec:
    if args.command == "sharpness-gradient":
        params = {"lam": args.lam, "points_per_probe": args.points_per_probe,
                  "tol": args.tol}
        if args.graded:
            params["graded"] = True
        return ExperimentSpec("sharpness-gradient", params, args.output)
    if args.command == "sharpness-area":
        return ExperimentSpec(
            "sharpness-area",
            {"k": args.k, "nodes_per_pi": args.nodes_per_pi, "tol": args.tol},
            args.output)
    if args.command == "estimate-suite":
        params = {"n": args.n, "count": args.count, "seed": args.seed,
                  "jobs": args.jobs}
        if args.nodes is not None:
            params["nodes"] = args.nodes
        return ExperimentSpec("estimate-suite", params, args.output)
    if args.command == "convergence":
        levels = tuple(int(tok) for tok in args.levels.split(","))
        return ExperimentSpec(
            "convergence",
            {"problem": args.problem, "levels": levels, "scheme": args.scheme},
            args.output)
    raise AssertionError(args.command)


def _cmd_report(args) -> int:
    path = Path(args.run) / "report.json"
    payload = json.loads(path.read_text())
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        from .estimates import EstimateReport

        reports = [
            EstimateReport(r["name"], r["measured"], r["bound"], r["direction"],
                           r["slack"], r.get("context", {}))
            for r in payload["reports"]
        ]
        print(reports_to_csv(reports), end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return _cmd_report(args)
    if args.command == "simulate":
        spec = ExperimentSpec.from_config(args.config)
        bundle = run_experiment(spec, export_trajectory=args.export_trajectory)
    else:
        spec = _spec_from_args(args)
        bundle = run_experiment(spec, export_trajectory=getattr(
            args, "export_trajectory", False))
    status = "PASS" if bundle.passed else "FAIL"
    fails = [r.name for r in bundle.reports if not r.passed]
    print(f"{bundle.name}: {status}"
          + (f" (failing: {', '.join(fails)})" if fails else ""))
    for rep in bundle.reports:
        mark = "ok " if rep.passed else "BAD"
        print(f"  [{mark}] {rep.name}: measured={rep.measured:.6g} "
              f"bound={rep.bound:.6g} margin={rep.margin:.3g}")
    return 0 if bundle.passed else 1


if __name__ == "__main__":
    sys.exit(main())
