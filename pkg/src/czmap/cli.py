"""Command-line front end.

Subcommands:
    validate  parse and validate a scenario file
    run       execute a scenario and write reports
    search    run the extremal-ratio search of a scenario
    radius    estimate harmonic radii at the declared base points
    report    pretty-print a written report file

Scenario files resolve against --scenario paths first, then the fixture
directory (overridable with the CZMAP_FIXTURES environment variable).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import CzmapError, ScenarioError
from .harmonic import estimate_harmonic_radius
from .report import read_reports, summarize, write_reports
from .runner import run_scenario
from .scenario import fixture_path, load_scenario


def _resolve_scenario(arg: str) -> str:
    if os.path.exists(arg):
        return arg
    candidate = fixture_path(arg)
    if os.path.exists(candidate):
        return candidate
    return arg


def _apply_overrides(scenario, args):
    if getattr(args, "mode", None):
        scenario.run.mode = args.mode
    if getattr(args, "p", None):
        scenario.run.p_list = [float(x) for x in args.p.split(",")]
    if getattr(args, "resolution", None):
        scenario.run.resolution_ladder = [int(x) for x
                                          in args.resolution.split(",")]
    if getattr(args, "seed", None) is not None:
        scenario.run.seed = args.seed
    return scenario


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        for issue in exc.issues:
            print(repr(issue), file=sys.stderr)
        return 1
    print(f"{scenario.name}: ok "
          f"({len(scenario.manifolds)} manifold(s), {len(scenario.maps)} map(s), "
          f"mode {scenario.run.mode})")
    return 0


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        for issue in exc.issues:
            print(repr(issue), file=sys.stderr)
        return 1
    _apply_overrides(scenario, args)
    reports = run_scenario(scenario)
    print(summarize(reports))
    out = args.out or scenario.run.out
    if out:
        jsonl, tsv = write_reports(reports, out)
        print(f"wrote {jsonl} and {tsv}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_search(args) -> int:
    args.mode = "search"
    return cmd_run(args)


def cmd_radius(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        for issue in exc.issues:
            print(repr(issue), file=sys.stderr)
        return 1
    status = 0
    for name, mdef in scenario.manifolds.items():
        chart = mdef.build_chart([args.resolution] * mdef.dimension
                                 if args.resolution else None)
        points = mdef.base_points or [0.5 * (np.asarray(mdef.lower)
                                             + np.asarray(mdef.upper))]
        for x in points:
            x = np.asarray(x, dtype=float)
            margin = float(min(np.min(x - chart.box.lower),
                               np.min(chart.box.upper - x)))
            lam_min, _ = chart.ellipticity_range()
            # leave reach for the padded solve domain
            r_max = args.r_max or 0.7 * margin * float(np.sqrt(lam_min))
            try:
                est = estimate_harmonic_radius(chart, x, r_max=r_max)
            except CzmapError as exc:
                print(f"{name} at {x.tolist()}: error {exc}", file=sys.stderr)
                status = 1
                continue
            print(f"{name} at {x.tolist()}: r_1,1/2 {est} "
                  f"(r_max {r_max:.4g}, {len(est.certificates)} solves)")
            for cert in est.certificates:
                rec = cert.as_record()
                print(f"    r={rec['r']:.5g} verdict={rec['verdict']} "
                      f"hr1_margin={rec['hr1_margin']:.4g} "
                      f"hr2_value={rec['hr2_value']:.4g} "
                      f"residual={rec['residual']:.3g}")
    return status


def cmd_report(args) -> int:
    records = read_reports(args.path)
    for rec in records:
        status = "PASS" if rec.get("passed") else "FAIL"
        print(f"[{status}] {rec.get('scenario')} mode={rec.get('mode')} "
              f"p={rec.get('p')} res={rec.get('resolution')} "
              f"ratio={rec.get('ratio')}")
        terms = rec.get("terms", {})
        for key in sorted(terms):
            print(f"    {key} = {terms[key]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="czmap",
        description="numerical verification of curvature-aware second-order "
                    "estimates for maps between Riemannian chart models")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--scenario", required=True,
                       help="scenario file path or shipped fixture name")
        p.add_argument("--mode", choices=("lemma", "ball", "global", "intro",
                                          "corollaryA", "search"))
        p.add_argument("--p", help="comma-separated exponents, e.g. 1.5,2,4")
        p.add_argument("--resolution",
                       help="comma-separated source grid ladder, e.g. 33,65")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="report path prefix")

    pv = sub.add_parser("validate", help="validate a scenario file")
    pv.add_argument("--scenario", required=True)
    pv.set_defaults(func=cmd_validate)

    pr = sub.add_parser("run", help="run a scenario")
    add_common(pr)
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("search", help="extremal-ratio search")
    add_common(ps)
    ps.set_defaults(func=cmd_search)

    pd = sub.add_parser("radius", help="estimate harmonic radii")
    pd.add_argument("--scenario", required=True)
    pd.add_argument("--resolution", type=int)
    pd.add_argument("--r-max", dest="r_max", type=float)
    pd.set_defaults(func=cmd_radius)

    pp = sub.add_parser("report", help="pretty-print a report file")
    pp.add_argument("path")
    pp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CzmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
