"""Scenario files: a line-oriented, sectioned ``key = value`` format.

Sections are ``[world]``, ``[policy]`` and ``[meta]`` (at most once each) and
``[bs]`` / ``[node]`` (repeatable). Omitted keys take the defaults below.
``write`` emits a canonical form that ``parse`` reads back to an equal
Scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .baseband import ALLOWED_BANDWIDTHS, BPSK, OOK, count_orthogonal_subcarriers
from .discovery import NARROW, WIDE
from .spectrum_db import TV_CHANNELS, TV_CHANNEL_WIDTH, SpectrumError, TvStation, load_station_registry

FIDELITIES = ("analytic", "mixed", "sample")


@dataclass(frozen=True)
class Issue:
    line: Optional[int]
    field: str
    message: str

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class WorldSpec:
    extent: tuple = (-3000.0, 3000.0, -3000.0, 3000.0)
    resolution: float = 100.0
    stations: str = ""
    path_loss_exponent: float = 3.0
    tv_path_loss_exponent: float = 3.5
    noise_floor_dbm: float = -124.0  # per 200 kHz
    shadowing_db: float = 0.0
    horizon: float = 60.0
    seed: int = 1
    fidelity: str = "mixed"


@dataclass(frozen=True)
class BsSpec:
    id: str = ""
    location: tuple = (0.0, 0.0)
    channel: int = 21
    bandwidth: float = 6e6
    subcarrier_bandwidth: float = 200e3
    join_subcarrier: int = 0
    tx_power_dbm: float = 15.0
    beacon_duty: float = 0.4
    beacon_burst: float = 0.02


@dataclass(frozen=True)
class NodeSpec:
    id: str = ""
    location: tuple = (0.0, 0.0)
    waypoints: tuple = ()
    speed: float = 0.0
    mobility_rate: float = -1.0  # negative: use speed
    ppm: float = 0.0
    bs: str = ""
    tx_power_dbm: float = 15.0
    packet_bytes: int = 40
    packets: int = 100
    interval: float = 0.0  # 0: back to back
    start: float = 0.0

    @property
    def rate(self) -> float:
        return self.speed if self.mobility_rate < 0 else self.mobility_rate


@dataclass(frozen=True)
class PolicySpec:
    modulation: str = OOK
    cfo_compensation: bool = True
    reestimation_period: float = 1.0
    ack: bool = True
    ack_feedback: bool = True
    ack_bytes: int = 4
    join_bytes: int = 8
    join_retries: int = 5
    retry_limit: int = 4
    max_doublings: int = 5
    cca_time: float = 1e-4
    sensitivity_dbm: float = -110.0
    scan_strategy: str = NARROW
    scan_hint: bool = True
    dwell: float = 0.1
    retune: float = 1e-3
    discovery_backoff: float = 1.0
    discovery_backoff_cap: float = 60.0
    channel_cache: int = 4
    alignment_timeout: float = 10.0
    psd_averages: int = 8
    beacon_interval: float = 0.1
    out_of_range_beacons: int = 3
    mobility_tick: float = 0.1
    voltage: float = 3.8
    rx_current: float = 5.4e-3
    tx_current: float = 13.4e-3
    idle_current: float = 0.7e-6
    wide_power_factor: float = 1.5
    metric_window: float = 0.0


@dataclass(frozen=True)
class Scenario:
    world: WorldSpec = WorldSpec()
    bss: tuple = ()
    nodes: tuple = ()
    policy: PolicySpec = PolicySpec()
    meta: tuple = ()  # sorted (key, value) string pairs
    base_dir: str = field(default=".", compare=False)

    @property
    def meta_dict(self) -> dict:
        return dict(self.meta)

    def stations(self) -> list[TvStation]:
        if not self.world.stations:
            return []
        p = Path(self.world.stations)
        if not p.is_absolute():
            p = Path(self.base_dir) / p
        return load_station_registry(p)

    def with_overrides(self, **world) -> "Scenario":
        return replace(self, world=replace(self.world, **world))


SECTIONS = {"world": WorldSpec, "bs": BsSpec, "node": NodeSpec, "policy": PolicySpec}
REPEATED = ("bs", "node")


# -- value codecs -------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_floats(s: str) -> tuple:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _parse_points(s: str) -> tuple:
    pts = []
    for chunk in s.split(";"):
        if chunk.strip():
            p = _parse_floats(chunk)
            if len(p) != 2:
                raise ValueError(f"waypoint {chunk.strip()!r} needs x and y")
            pts.append(p)
    return tuple(pts)


def _decode(spec_field, text: str):
    default = spec_field.default
    name = spec_field.name
    if name == "waypoints":
        return _parse_points(text)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        f = float(text)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(f)
    if isinstance(default, float):
        v = float(text)
        if math.isnan(v):
            raise ValueError("NaN is not a valid value")
        return v
    if isinstance(default, tuple):
        vals = _parse_floats(text)
        if len(vals) != len(default):
            raise ValueError(f"expected {len(default)} numbers, got {len(vals)}")
        return vals
    return text.strip()


def _encode(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(c)) for c in p) for p in value)
        return " ".join(repr(float(v)) for v in value)
    return str(value)


# -- parse / write ------------------------------------------------------------

def parse_scenario(text: str, strict: bool = False, base_dir: str = ".") -> Scenario:
    """Parse and validate; every problem is collected before raising ScenarioError."""
    issues: list[Issue] = []
    singles: dict[str, dict] = {"world": {}, "policy": {}}
    repeated: dict[str, list] = {"bs": [], "node": []}
    meta: dict[str, str] = {}
    lines: dict[tuple, int] = {}
    section = None
    current: Optional[dict] = None
    seen_single: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section in REPEATED:
                current = {}
                repeated[section].append((lineno, current))
            elif section in singles:
                if section in seen_single:
                    issues.append(Issue(lineno, section, "section may appear only once"))
                seen_single.add(section)
                current = singles[section]
            elif section == "meta":
                current = meta
            else:
                issues.append(Issue(lineno, section, "unknown section"))
                current = None
            continue
        if "=" not in line:
            issues.append(Issue(lineno, section or "-", f"expected 'key = value', got {line!r}"))
            continue
        if section is None:
            issues.append(Issue(lineno, "-", "key outside of any section"))
            continue
        if current is None:
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if section == "meta":
            meta[key] = value
            continue
        cls = SECTIONS[section]
        spec_fields = {f.name: f for f in fields(cls)}
        if key not in spec_fields:
            if strict:
                issues.append(Issue(lineno, f"{section}.{key}", "unknown key"))
            continue
        try:
            current[key] = _decode(spec_fields[key], value)
        except ValueError as exc:
            issues.append(Issue(lineno, f"{section}.{key}", str(exc)))
            continue
        lines[(id(current), key)] = lineno

    world = WorldSpec(**singles["world"])
    policy = PolicySpec(**singles["policy"])
    bss = tuple(BsSpec(**kv) for _, kv in repeated["bs"])
    nodes = tuple(NodeSpec(**kv) for _, kv in repeated["node"])
    scn = Scenario(world, bss, nodes, policy, tuple(sorted(meta.items())), base_dir)

    def where(obj: dict, key: str, fallback: Optional[int] = None):
        return lines.get((id(obj), key), fallback)

    origin = {"world": singles["world"], "policy": singles["policy"]}
    issues += validate(
        scn,
        locate=lambda sec, idx, key: where(
            repeated[sec][idx][1] if sec in REPEATED else origin[sec], key,
            repeated[sec][idx][0] if sec in REPEATED else None,
        ),
    )
    if issues:
        raise ScenarioError(issues)
    return scn


def load_scenario(path: str | Path, strict: bool = False) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError([Issue(None, str(p), f"cannot read scenario: {exc.strerror or exc}")]) from None
    return parse_scenario(text, strict=strict, base_dir=str(p.parent))


def write_scenario(scn: Scenario) -> str:
    """Canonical text: every key of every section, in declaration order."""
    out = []

    def emit(name, obj):
        out.append(f"[{name}]")
        for f in fields(obj):
            out.append(f"{f.name} = {_encode(getattr(obj, f.name))}")
        out.append("")

    emit("world", scn.world)
    emit("policy", scn.policy)
    for b in scn.bss:
        emit("bs", b)
    for n in scn.nodes:
        emit("node", n)
    if scn.meta:
        out.append("[meta]")
        out += [f"{k} = {v}" for k, v in scn.meta]
        out.append("")
    return "\n".join(out)


# -- validation ---------------------------------------------------------------

def bs_channels(b: BsSpec) -> list[int]:
    k = max(1, int(math.ceil(b.bandwidth / TV_CHANNEL_WIDTH - 1e-9)))
    return [b.channel + i for i in range(k)]


def subcarrier_count(b: BsSpec) -> int:
    return count_orthogonal_subcarriers(b.bandwidth, b.subcarrier_bandwidth, 0.0)


def validate(scn: Scenario, locate=lambda sec, idx, key: None) -> list[Issue]:
    issues = []

    def bad(sec, idx, key, msg):
        label = f"{sec}[{idx}].{key}" if idx is not None else f"{sec}.{key}"
        issues.append(Issue(locate(sec, idx, key), label, msg))

    w = scn.world
    if not w.horizon > 0:
        bad("world", None, "horizon", "must be positive")
    xmin, xmax, ymin, ymax = w.extent
    if not (xmax > xmin and ymax > ymin):
        bad("world", None, "extent", "must be xmin xmax ymin ymax with positive area")
    if not w.resolution > 0:
        bad("world", None, "resolution", "must be positive")
    if w.fidelity not in FIDELITIES:
        bad("world", None, "fidelity", f"must be one of {', '.join(FIDELITIES)}")
    if not w.path_loss_exponent > 0 or not w.tv_path_loss_exponent > 0:
        bad("world", None, "path_loss_exponent", "must be positive")
    if w.shadowing_db < 0:
        bad("world", None, "shadowing_db", "must be non-negative")
    if w.stations:
        try:
            scn.stations()
        except (OSError, SpectrumError) as exc:
            bad("world", None, "stations", str(exc))

    p = scn.policy
    if p.modulation.lower() not in (OOK, BPSK, "ask"):
        bad("policy", None, "modulation", "must be ook or bpsk")
    if p.scan_strategy not in (NARROW, WIDE):
        bad("policy", None, "scan_strategy", f"must be {NARROW} or {WIDE}")
    for key in ("dwell", "beacon_interval", "mobility_tick", "voltage", "alignment_timeout", "discovery_backoff"):
        if not getattr(p, key) > 0:
            bad("policy", None, key, "must be positive")
    for key in ("retry_limit", "max_doublings", "join_retries", "channel_cache", "out_of_range_beacons",
                "reestimation_period", "cca_time", "retune", "rx_current", "tx_current", "idle_current",
                "metric_window", "ack_bytes"):
        if getattr(p, key) < 0:
            bad("policy", None, key, "must be non-negative")
    if p.join_bytes < 1 or p.psd_averages < 1:
        bad("policy", None, "join_bytes", "must be at least 1")

    ids = set()
    for i, b in enumerate(scn.bss):
        if not b.id:
            bad("bs", i, "id", "is required")
        elif b.id in ids:
            bad("bs", i, "id", f"duplicate BS id {b.id!r}")
        ids.add(b.id)
        if b.subcarrier_bandwidth not in ALLOWED_BANDWIDTHS:
            allowed = ", ".join(f"{int(v / 1e3)} kHz" for v in ALLOWED_BANDWIDTHS)
            bad("bs", i, "subcarrier_bandwidth", f"{b.subcarrier_bandwidth / 1e3:g} kHz is not in the allowed set {{{allowed}}}")
        if not b.bandwidth > 0:
            bad("bs", i, "bandwidth", "must be positive")
        elif any(ch not in TV_CHANNELS for ch in bs_channels(b)):
            bad("bs", i, "channel", f"band starting at channel {b.channel} leaves the UHF TV channels {TV_CHANNELS[0]}-{TV_CHANNELS[-1]}")
        elif b.subcarrier_bandwidth in ALLOWED_BANDWIDTHS:
            m = subcarrier_count(b)
            if m < 2:
                bad("bs", i, "bandwidth", "needs room for a join subcarrier and at least one data subcarrier")
            elif not 0 <= b.join_subcarrier < m:
                bad("bs", i, "join_subcarrier", f"index must be in 0..{m - 1}")
        if not 0 < b.beacon_duty <= 1 or not b.beacon_burst > 0:
            bad("bs", i, "beacon_duty", "duty must be in (0, 1] and burst positive")

    nids = set()
    for i, n in enumerate(scn.nodes):
        if not n.id:
            bad("node", i, "id", "is required")
        elif n.id in nids:
            bad("node", i, "id", f"duplicate node id {n.id!r}")
        nids.add(n.id)
        if n.bs and n.bs not in ids:
            bad("node", i, "bs", f"unknown BS {n.bs!r}")
        if n.speed < 0:
            bad("node", i, "speed", "must be non-negative")
        if n.speed > 0 and len(n.waypoints) < 1:
            bad("node", i, "waypoints", "a moving node needs at least one waypoint")
        if n.packet_bytes < 1:
            bad("node", i, "packet_bytes", "must be at least 1")
        if n.packets < 0 or n.interval < 0 or n.start < 0:
            bad("node", i, "packets", "packets, interval and start must be non-negative")
    return issues
