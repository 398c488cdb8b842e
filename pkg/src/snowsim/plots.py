"""Tidy plot data (x, series, mean, stddev, n) for each figure family.

Input is a set of run reports, either MetricsReport objects or the JSON
summaries they serialize to.
"""

from __future__ import annotations

import csv
import io
import statistics
from collections import defaultdict
from typing import Callable, Iterable

from .sim.metrics import SCHEMA_VERSION, MetricsReport

PLOT_COLUMNS = ("schema_version", "x", "series", "mean", "stddev", "n")


class PlotDataError(ValueError):
    pass


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise PlotDataError(f"missing metric {key!r} in {where}")
    return d[key]


def _x(rep: dict) -> float:
    meta = rep.get("meta") or {}
    if "x" not in meta:
        raise PlotDataError(f"missing metric 'x' (meta.x) in report seed {rep.get('seed')}")
    try:
        return float(meta["x"])
    except ValueError:
        raise PlotDataError(f"meta.x {meta['x']!r} is not a number") from None


def _series(rep: dict) -> str:
    meta = rep.get("meta") or {}
    return meta.get("series") or rep.get("label") or "default"


def _per_vs_mobility(rep):
    for n in _need(rep, "nodes", "report"):
        if n.get("per") is not None:
            yield _need(n, "mobility_rate", "node"), _series(rep), n["per"]


def _aggregate_vs(xkey: str, ykey: str):
    def f(rep):
        agg = _need(rep, "aggregate", "report")
        x = _x(rep) if xkey == "meta.x" else _need(agg, xkey, "aggregate")
        y = _need(agg, ykey, "aggregate")
        if y is not None:
            yield x, _series(rep), y
    return f


def _energy_vs_distance(rep):
    x = _x(rep)
    for n in _need(rep, "nodes", "report"):
        yield x, _series(rep), _need(n, "energy_j", "node")


def _cdr_cfo(rep):
    agg = _need(rep, "aggregate", "report")
    comp = _need(rep, "cfo_compensation", "report")
    x = (rep.get("meta") or {}).get("x", rep.get("label") or "")
    st = _need(agg, "mean_cdr_stationary", "aggregate")
    mob = _need(agg, "mean_cdr_mobile", "aggregate")
    if st is not None:
        yield x, "stationary", st
    if mob is not None:
        yield x, "mobile-compensated" if comp else "mobile-uncompensated", mob


def _alignment_vs_bw(rep):
    for h in _need(rep, "handoffs", "report"):
        if h.get("completed") and h.get("from_bs") is not None:
            yield _need(h, "subcarrier_bandwidth", "handoff"), _series(rep), _need(h, "alignment_s", "handoff")


FIGURES: dict[str, Callable] = {
    "per_vs_mobility": _per_vs_mobility,
    "throughput_vs_nodes": _aggregate_vs("nodes", "throughput_bps"),
    "energy_vs_distance": _energy_vs_distance,
    "latency_vs_nodes": _aggregate_vs("nodes", "mean_latency_s"),
    "cdr_vs_distance": _aggregate_vs("meta.x", "mean_cdr"),
    "cdr_cfo_comparison": _cdr_cfo,
    "alignment_latency_vs_bw": _alignment_vs_bw,
}


def plot_rows(reports: Iterable, figure: str) -> list[dict]:
    if figure not in FIGURES:
        raise PlotDataError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    groups: dict[tuple, list] = defaultdict(list)
    for rep in reports:
        d = rep.summary() if isinstance(rep, MetricsReport) else rep
        for x, series, y in FIGURES[figure](d):
            groups[(x, series)].append(float(y))

    def key(k):
        x, s = k
        return (0, x, s) if isinstance(x, (int, float)) else (1, str(x), s)

    rows = []
    for (x, series) in sorted(groups, key=key):
        ys = groups[(x, series)]
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "x": x,
            "series": series,
            "mean": statistics.fmean(ys),
            "stddev": statistics.stdev(ys) if len(ys) > 1 else 0.0,
            "n": len(ys),
        })
    return rows


def emit_plot_data(reports: Iterable, figure: str) -> str:
    rows = plot_rows(reports, figure)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=PLOT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()
