"""Run orchestration: seed sweeps, report files and the cross-seed summary."""

from __future__ import annotations

import json
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .scenario import Scenario, ScenarioError, load_scenario
from .sim import run
from .sim.metrics import SCHEMA_VERSION, MetricsReport

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def parse_seeds(text: str) -> list[int]:
    """'7', '1-10' or '1,4,9' (ranges allowed inside comma lists)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return list(dict.fromkeys(seeds))


def _run_one(args) -> MetricsReport:
    scn, seed, fidelity = args
    return run(scn, seed, fidelity)


def run_seeds(scn: Scenario, seeds: Sequence[int], fidelity: Optional[str] = None, workers: int = 1) -> list[MetricsReport]:
    jobs = [(scn, s, fidelity) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def summarize(reports: Iterable[MetricsReport]) -> dict:
    """Mean, sample standard deviation and count of every aggregate metric across seeds."""
    reports = list(reports)
    keys = sorted({k for r in reports for k, v in r.aggregate.items() if _numeric(v)})
    metrics = {}
    for k in keys:
        vals = [r.aggregate[k] for r in reports if _numeric(r.aggregate.get(k))]
        metrics[k] = {
            "mean": statistics.fmean(vals),
            "stddev": statistics.stdev(vals) if len(vals) > 1 else 0.0,
            "n": len(vals),
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "seeds": [r.seed for r in reports],
        "label": reports[0].label if reports else "",
        "metrics": metrics,
    }


def write_reports(reports: Sequence[MetricsReport], out_dir: Path, stem: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in reports:
        for suffix, text in ((".csv", r.to_csv()), (".json", r.to_json())):
            p = out_dir / f"{stem}_seed{r.seed}{suffix}"
            p.write_text(text)
            written.append(p)
    p = out_dir / f"{stem}_summary.json"
    p.write_text(json.dumps(summarize(reports), sort_keys=True, indent=2) + "\n")
    written.append(p)
    return written


def run_command(
    scenario_path: str | Path,
    seeds: Optional[Sequence[int]] = None,
    out_dir: str | Path = "out",
    strict: bool = False,
    fidelity: Optional[str] = None,
    workers: int = 1,
    log=None,
) -> int:
    """Validate, run every seed, write reports. Returns 0, 2 (invalid input) or 3 (run failed)."""
    log = log or sys.stderr
    try:
        scn = load_scenario(scenario_path, strict=strict)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(f"{scenario_path}: {issue}", file=log)
        return EXIT_INVALID
    if fidelity is not None and fidelity not in ("analytic", "mixed", "sample"):
        print(f"unknown fidelity {fidelity!r}", file=log)
        return EXIT_INVALID
    seeds = list(seeds) if seeds else [scn.world.seed]
    try:
        reports = run_seeds(scn, seeds, fidelity, workers)
        write_reports(reports, Path(out_dir), Path(scenario_path).stem)
    except Exception as exc:  # anything past validation is a runtime failure
        print(f"run failed: {type(exc).__name__}: {exc}", file=log)
        return EXIT_RUNTIME
    return EXIT_OK
