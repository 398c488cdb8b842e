"""snowsim command line: validate, run, plot, fixtures."""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from importlib import resources
from pathlib import Path

from .plots import FIGURES, PlotDataError, emit_plot_data
from .runner import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, parse_seeds, run_command
from .scenario import ScenarioError, load_scenario


def fixtures_dir() -> Path:
    return Path(str(resources.files("snowsim") / "fixtures"))


def _validate(args) -> int:
    try:
        scn = load_scenario(args.scenario, strict=args.strict)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(f"{args.scenario}: {issue}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{args.scenario}: ok ({len(scn.bss)} BS, {len(scn.nodes)} nodes, horizon {scn.world.horizon:g} s)")
    return EXIT_OK


def _run(args) -> int:
    try:
        if args.seeds:
            seeds = parse_seeds(args.seeds)
        elif args.seed is not None:
            seeds = [args.seed]
        else:
            seeds = None
    except ValueError as exc:
        print(f"bad seeds: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run_command(args.scenario, seeds, args.out, args.strict, args.fidelity, args.workers)


def _plot(args) -> int:
    reports = []
    for path in args.reports:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return EXIT_INVALID
        if "nodes" not in data:
            continue  # cross-seed summaries carry no per-run data
        reports.append(data)
    try:
        text = emit_plot_data(reports, args.figure)
    except PlotDataError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _fixtures(args) -> int:
    src = fixtures_dir()
    names = sorted(p.name for p in src.iterdir() if p.suffix in (".scn", ".txt"))
    if args.copy:
        dst = Path(args.copy)
        dst.mkdir(parents=True, exist_ok=True)
        for n in names:
            shutil.copy(src / n, dst / n)
        print(f"copied {len(names)} files to {dst}")
    else:
        for n in names:
            print(src / n)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snowsim", description="Mobile SNOW network simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.add_argument("--strict", action="store_true", help="reject unknown keys")
    v.set_defaults(func=_validate)

    r = sub.add_parser("run", help="run a scenario for one or more seeds")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--seeds", help="e.g. 1-10 or 1,3,5")
    r.add_argument("--out", default="out", help="report directory (default: out)")
    r.add_argument("--strict", action="store_true", help="reject unknown keys")
    r.add_argument("--fidelity", choices=("analytic", "sample", "mixed"))
    r.add_argument("--workers", type=int, default=1, help="parallel seed workers")
    r.set_defaults(func=_run)

    p = sub.add_parser("plot", help="emit tidy plot data from JSON run reports")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("reports", nargs="*")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=_plot)

    f = sub.add_parser("fixtures", help="list or copy the bundled scenarios")
    f.add_argument("--copy", metavar="DIR")
    f.set_defaults(func=_fixtures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
