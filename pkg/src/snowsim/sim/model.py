"""Simulator state types: event queue, energy accounting, link budget, node and BS state."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..baseband import Subcarrier
from ..cfo import CfoEstimate
from ..spectrum_db import PropagationModel

ASSOCIATED = "ASSOCIATED"
OUT_OF_RANGE = "OUT_OF_RANGE"
DISCOVERING = "DISCOVERING"
ALIGNING = "ALIGNING"
JOINING = "JOINING"
PHASES = (ASSOCIATED, OUT_OF_RANGE, DISCOVERING, ALIGNING, JOINING)

# forward cycle, plus the retreat to discovery when alignment or join gives up
TRANSITIONS = {
    ASSOCIATED: {OUT_OF_RANGE},
    OUT_OF_RANGE: {DISCOVERING},
    DISCOVERING: {ALIGNING},
    ALIGNING: {JOINING, DISCOVERING},
    JOINING: {ASSOCIATED, DISCOVERING},
}

TX = "tx"
RX = "rx"
RX_WIDE = "rx_wide"
IDLE = "idle"
MODES = (TX, RX, RX_WIDE, IDLE)


class SimError(RuntimeError):
    pass


class EventQueue:
    """Min-heap keyed on (time, sequence); sequence breaks ties in push order."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()

    def push(self, time: float, kind: str, payload: Any = None) -> int:
        if not math.isfinite(time):
            raise SimError(f"event time must be finite, got {time}")
        seq = next(self._seq)
        heapq.heappush(self._heap, (time, seq, kind, payload))
        return seq

    def pop(self):
        return heapq.heappop(self._heap)

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def __len__(self):
        return len(self._heap)


@dataclass(frozen=True)
class EnergyModel:
    voltage: float = 3.8
    rx_current: float = 5.4e-3
    tx_current: float = 13.4e-3
    idle_current: float = 0.7e-6
    wide_factor: float = 1.5

    def power(self, mode: str) -> float:
        if mode == TX:
            return self.voltage * self.tx_current
        if mode == RX:
            return self.voltage * self.rx_current
        if mode == RX_WIDE:
            return self.voltage * self.rx_current * self.wide_factor
        if mode == IDLE:
            return self.voltage * self.idle_current
        raise SimError(f"unknown radio mode {mode!r}")

    def energy(self, mode: str, duration: float) -> float:
        return self.power(mode) * duration


@dataclass
class EnergyLedger:
    """Non-overlapping radio activity intervals; idle fills the gaps."""

    intervals: list = field(default_factory=list)  # (mode, start, end, tag)
    busy_until: float = 0.0

    def add(self, mode: str, start: float, end: float, tag: str = "") -> None:
        if mode not in MODES or mode == IDLE:
            raise SimError(f"cannot book radio mode {mode!r}")
        if end < start:
            raise SimError("interval ends before it starts")
        if start < self.busy_until - 1e-12:
            raise SimError(f"radio already busy until {self.busy_until:.9f}, booking at {start:.9f}")
        if end > start:
            self.intervals.append((mode, start, end, tag))
        self.busy_until = max(self.busy_until, end)

    def durations(self, t0: float, t1: float) -> dict:
        """Time per mode inside [t0, t1), idle included."""
        out = {m: 0.0 for m in MODES}
        for mode, s, e, _ in self.intervals:
            out[mode] += max(0.0, min(e, t1) - max(s, t0))
        out[IDLE] = max(0.0, (t1 - t0) - sum(out[m] for m in (TX, RX, RX_WIDE)))
        return out

    def tagged(self, tag: str, t0: float, t1: float) -> float:
        return sum(max(0.0, min(e, t1) - max(s, t0)) for _, s, e, g in self.intervals if g == tag)

    def energy(self, model: EnergyModel, t0: float, t1: float) -> float:
        return sum(model.energy(m, d) for m, d in self.durations(t0, t1).items())

    def tagged_energy(self, model: EnergyModel, tag: str, t0: float, t1: float) -> float:
        return sum(
            model.energy(m, max(0.0, min(e, t1) - max(s, t0))) for m, s, e, g in self.intervals if g == tag
        )


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float = 15.0
    path_loss: PropagationModel = PropagationModel(exponent=3.0)
    noise_floor_dbm: float = -124.0
    sensitivity: float = -110.0
    reference_bandwidth: float = 200e3

    def noise_floor(self, bandwidth: float) -> float:
        """Noise power (dBm) in ``bandwidth``, scaled from the reference-bandwidth floor."""
        return self.noise_floor_dbm + 10 * math.log10(bandwidth / self.reference_bandwidth)

    def rss(self, tx_power: float, distance: float, freq: float) -> float:
        return tx_power - self.path_loss.path_loss(distance, freq)

    def range(self, tx_power: float, freq: float) -> float:
        """Distance at which RSS falls to the sensitivity."""
        return self.path_loss.range_for_loss(tx_power - self.sensitivity, freq)


@dataclass
class Transmission:
    node_id: str
    bs_id: str
    start: float
    end: float
    nominal_freq: float
    actual_freq: float  # nominal plus the residual the receiver sees
    symbol_rate: float
    tx_power: float
    location: tuple
    rss_at: dict = field(default_factory=dict)  # BS id -> received power (dBm)


@dataclass
class HandoffRecord:
    node_id: str
    from_bs: Optional[str]
    started: float
    to_bs: Optional[str] = None
    discovery: float = 0.0
    alignment: float = 0.0
    join: float = 0.0
    discovery_energy: float = 0.0
    alignment_energy: float = 0.0
    join_energy: float = 0.0
    scans: int = 0
    alignment_attempts: int = 0
    subcarrier_bandwidth: Optional[float] = None
    completed: bool = False

    @property
    def total(self) -> float:
        return self.discovery + self.alignment + self.join

    @property
    def energy(self) -> float:
        return self.discovery_energy + self.alignment_energy + self.join_energy


@dataclass
class NodeState:
    id: str
    location: np.ndarray
    velocity: np.ndarray
    ppm_true: float
    rng: np.random.Generator
    waypoints: tuple = ()
    speed: float = 0.0
    mobility_rate: float = 0.0
    tx_power: float = 15.0
    cfo_estimate: Optional[CfoEstimate] = None
    downlink_estimate: Optional[CfoEstimate] = None
    subcarrier: Optional[Subcarrier] = None
    phase: str = JOINING
    bs_id: Optional[str] = None
    energy_used: float = 0.0
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    leg: int = 0  # index of the waypoint being approached
    leg_dir: int = 1
    phase_log: list = field(default_factory=list)
    weak_beacons: int = 0
    channel_cache: list = field(default_factory=list)
    queue: list = field(default_factory=list)  # generation times of waiting packets
    busy: bool = False  # a packet is in flight (backoff, CCA, TX or ACK wait)
    attempts: int = 0
    transmitted: bool = False  # the packet in flight has been on the air at least once

    def set_phase(self, phase: str, t: float) -> None:
        if phase not in TRANSITIONS.get(self.phase, ()):
            raise SimError(f"node {self.id}: illegal phase change {self.phase} -> {phase}")
        self.phase_log.append((t, self.phase, phase))
        self.phase = phase


@dataclass
class BaseStationState:
    id: str
    location: tuple
    channel: int
    band_low: float
    bandwidth: float
    subcarriers: tuple
    join_subcarrier: Subcarrier
    tx_power: float
    beacon_burst: float
    beacon_duty: float
    beacon_phase: float
    coverage_radius: float
    availability: dict = field(default_factory=dict)  # Subcarrier -> cell count
    cfo_table: dict = field(default_factory=dict)  # node id -> CfoEstimate
    associations: dict = field(default_factory=dict)  # node id -> Subcarrier

    @property
    def data_subcarriers(self) -> tuple:
        return tuple(sc for sc in self.subcarriers if sc != self.join_subcarrier)

    @property
    def subcarrier_bandwidth(self) -> float:
        return self.join_subcarrier.bandwidth

    @property
    def beacon_period(self) -> float:
        return self.beacon_burst / self.beacon_duty

    def burst_at_or_after(self, t: float) -> tuple[float, float]:
        """Beacon burst containing ``t`` (clipped to start at ``t``) or the next one."""
        period = self.beacon_period
        k = math.floor((t - self.beacon_phase) / period)
        start = self.beacon_phase + k * period
        if t < start + self.beacon_burst:
            return max(t, start), start + self.beacon_burst
        start += period
        return start, start + self.beacon_burst

    def beaconing(self, t: float) -> bool:
        return (t - self.beacon_phase) % self.beacon_period < self.beacon_burst
