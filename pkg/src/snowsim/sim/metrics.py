"""Run reports: per-node and aggregate metrics, CSV rows per metric window, JSON summary."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .model import RX, RX_WIDE, TX

if TYPE_CHECKING:
    from .engine import Simulation

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "schema_version", "seed", "node_id", "window_start", "window_end", "mobility_rate", "bs_id",
    "sent", "delivered", "per", "cdr", "tx_airtime_s", "tx_energy_j", "rx_time_s", "energy_j",
    "mean_latency_s", "handoffs",
)


@dataclass
class MetricsReport:
    seed: int
    label: str
    fidelity: str
    horizon: float
    meta: dict = field(default_factory=dict)
    cfo_compensation: bool = True
    nodes: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    handoffs: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def node(self, node_id: str) -> dict:
        for n in self.nodes:
            if n["id"] == node_id:
                return n
        raise KeyError(node_id)

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "label": self.label,
            "fidelity": self.fidelity,
            "horizon": self.horizon,
            "meta": self.meta,
            "cfo_compensation": self.cfo_compensation,
            "aggregate": self.aggregate,
            "nodes": self.nodes,
            "handoffs": self.handoffs,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.summary()), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.windows:
            w.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _clean(obj):
    """JSON has no NaN or infinity; map them to null."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def _mean(xs) -> Optional[float]:
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def build_report(sim: "Simulation") -> MetricsReport:
    horizon = sim.horizon
    model = sim.energy
    meta = sim.scn.meta_dict
    rep = MetricsReport(sim.seed, meta.get("label", ""), sim.fidelity, horizon, meta, sim.policy.cfo_compensation)

    by_node: dict[str, list] = {nid: [] for nid in sim.nodes}
    for f in sim.frames:
        by_node[f.node_id].append(f)
    ho_by_node: dict[str, list] = {nid: [] for nid in sim.nodes}
    for h in sim.handoffs:
        ho_by_node[h.node_id].append(h)

    window = sim.policy.metric_window
    if window > 0:
        edges = [k * window for k in range(int(math.ceil(horizon / window - 1e-9)) + 1)]
        edges[-1] = horizon
    else:
        edges = [0.0, horizon]

    for spec in sim.scn.nodes:
        node = sim.nodes[spec.id]
        st = sim.stats[spec.id]
        frames = by_node[spec.id]
        ledger = node.ledger
        dur = ledger.durations(0.0, horizon)
        energy = ledger.energy(model, 0.0, horizon)
        node.energy_used = energy
        sent = len(frames)
        delivered = sum(f.delivered for f in frames)
        failed = sent - delivered + st["unsent_drops"]
        tries = sent + st["unsent_drops"]
        lat = sim.latencies[spec.id]
        acks = sim.ack_times[spec.id]
        hos = [h for h in ho_by_node[spec.id] if h.from_bs is not None]
        rep.nodes.append({
            "id": spec.id,
            "mobility_rate": spec.rate,
            "ppm": spec.ppm,
            "final_phase": node.phase,
            "final_bs": node.bs_id,
            "generated": st["generated"],
            "sent": sent,
            "delivered": delivered,
            "dropped": st["dropped"],
            "cca_busy": st["cca_busy"],
            "per": _ratio(failed, tries),
            "cdr": _ratio(delivered, tries),
            "tx_airtime_s": ledger.tagged("data", 0.0, horizon),
            "tx_energy_j": ledger.tagged_energy(model, "data", 0.0, horizon),
            "tx_time_s": dur[TX],
            "rx_time_s": dur[RX] + dur[RX_WIDE],
            "energy_j": energy,
            "mean_latency_s": _mean(lat),
            "completion_time_s": (acks[-1] - spec.start) if acks else None,
            "mean_abs_residual_cfo_hz": _mean(st["residuals"]),
            "joins": st["joins"],
            "handoffs": len(hos),
            "mean_handoff_latency_s": _mean([h.total for h in hos if h.completed]),
        })
        for t0, t1 in zip(edges[:-1], edges[1:]):
            fw = [f for f in frames if t0 <= f.start < t1]
            d = ledger.durations(t0, t1)
            s = len(fw)
            ok = sum(f.delivered for f in fw)
            rep.windows.append({
                "schema_version": SCHEMA_VERSION,
                "seed": sim.seed,
                "node_id": spec.id,
                "window_start": t0,
                "window_end": t1,
                "mobility_rate": spec.rate,
                "bs_id": node.bs_id or "",
                "sent": s,
                "delivered": ok,
                "per": _ratio(s - ok, s),
                "cdr": _ratio(ok, s),
                "tx_airtime_s": ledger.tagged("data", t0, t1),
                "tx_energy_j": ledger.tagged_energy(model, "data", t0, t1),
                "rx_time_s": d[RX] + d[RX_WIDE],
                "energy_j": ledger.energy(model, t0, t1),
                "mean_latency_s": _mean([l for a, l in zip(acks, lat) if t0 <= a < t1]),
                "handoffs": sum(1 for h in hos if t0 <= h.started < t1),
            })

    for h in sim.handoffs:
        rep.handoffs.append({
            "node_id": h.node_id,
            "from_bs": h.from_bs,
            "to_bs": h.to_bs,
            "started": h.started,
            "discovery_s": h.discovery,
            "alignment_s": h.alignment,
            "join_s": h.join,
            "total_s": h.total,
            "discovery_energy_j": h.discovery_energy,
            "alignment_energy_j": h.alignment_energy,
            "join_energy_j": h.join_energy,
            "energy_j": h.energy,
            "scans": h.scans,
            "alignment_attempts": h.alignment_attempts,
            "subcarrier_bandwidth": h.subcarrier_bandwidth,
            "completed": h.completed,
        })

    delivered_bits = sum(f.bits for f in sim.frames if f.delivered)
    all_acks = [t for ts in sim.ack_times.values() for t in ts]
    starts = [s.start for s in sim.scn.nodes if sim.ack_times[s.id]]
    stationary = [n["cdr"] for n in rep.nodes if n["mobility_rate"] == 0]
    mobile = [n["cdr"] for n in rep.nodes if n["mobility_rate"] > 0]
    real_handoffs = [h for h in rep.handoffs if h["from_bs"] is not None and h["completed"]]
    rep.aggregate = {
        "nodes": len(rep.nodes),
        "frames": len(sim.frames),
        "delivered_bits": delivered_bits,
        "throughput_bps": delivered_bits / horizon if horizon > 0 else 0.0,
        "collection_time_s": (max(all_acks) - min(starts)) if all_acks else None,
        "mean_cdr": _mean([n["cdr"] for n in rep.nodes]),
        "mean_per": _mean([n["per"] for n in rep.nodes]),
        "mean_cdr_stationary": _mean(stationary),
        "mean_cdr_mobile": _mean(mobile),
        "mean_per_stationary": _mean([1 - c for c in stationary if c is not None]),
        "mean_per_mobile": _mean([1 - c for c in mobile if c is not None]),
        "energy_j": sum(n["energy_j"] for n in rep.nodes),
        "tx_energy_j": sum(n["tx_energy_j"] for n in rep.nodes),
        "mean_latency_s": _mean([n["mean_latency_s"] for n in rep.nodes]),
        "handoffs": len(real_handoffs),
        "mean_handoff_latency_s": _mean([h["total_s"] for h in real_handoffs]),
        "mean_alignment_latency_s": _mean([h["alignment_s"] for h in real_handoffs]),
    }
    return rep
