"""Base-station discovery for a node that has left its BS's range.

The node only listens. Each scanned channel yields an RSS trace whose
features separate TV primaries (strong, constant, continuous, unlike their
neighbours) from a SNOW BS (bursty, fluctuating) and from plain noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Protocol, Sequence

import numpy as np

from .spectrum_db import EightPointEntry, TV_CHANNELS, channel_low_edge

TV = "TV"
SNOW_BS = "SNOW_BS"
NOISE = "NOISE"

NARROW = "NARROW"
WIDE = "WIDE"


class DiscoveryError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    sensitivity_dbm: float = -110.0
    protection_dbm: float = -84.0
    duty_threshold: float = 0.9
    var_threshold: float = 1.0
    similarity_threshold: float = 6.0
    noise_floor_dbm: float = -115.0
    floor_margin_db: float = 6.0
    min_window: float = 0.1


DEFAULT_CLASSIFIER = ClassifierConfig()


@dataclass(frozen=True, eq=False)
class SignalTrace:
    rss_series: np.ndarray
    window: float
    channel: int
    adjacent_rss: float

    def __post_init__(self):
        rss = np.asarray(self.rss_series, dtype=np.float64).ravel()
        if rss.size == 0:
            raise DiscoveryError("trace has no samples")
        if not self.window > 0:
            raise DiscoveryError("trace window must be positive")
        object.__setattr__(self, "rss_series", rss)


@dataclass(frozen=True)
class Features:
    mean_rss: float
    amplitude_variance: float
    duty_cycle: float
    adjacent_similarity: float


@dataclass(frozen=True)
class Classification:
    verdict: str
    confidence: float
    features: Features


def mean_power_dbm(rss: np.ndarray) -> float:
    return float(10 * np.log10(np.mean(10 ** (np.asarray(rss) / 10))))


def extract_features(trace: SignalTrace, cfg: ClassifierConfig = DEFAULT_CLASSIFIER) -> Features:
    if trace.window < cfg.min_window - 1e-12:
        raise DiscoveryError(f"observation window {trace.window:g} s is shorter than {cfg.min_window:g} s")
    rss = trace.rss_series
    mean_rss = mean_power_dbm(rss)
    above = rss > cfg.noise_floor_dbm + cfg.floor_margin_db
    duty = float(np.mean(above))
    var = float(np.var(rss[above])) if np.any(above) else 0.0
    return Features(mean_rss, var, duty, abs(mean_rss - trace.adjacent_rss))


def _clip01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def classify(f: Features, cfg: ClassifierConfig = DEFAULT_CLASSIFIER) -> Classification:
    """Rule table; confidence is the normalised distance to the deciding threshold."""
    if f.mean_rss < cfg.sensitivity_dbm:
        return Classification(NOISE, _clip01((cfg.sensitivity_dbm - f.mean_rss) / 10), f)
    margins = (
        (f.mean_rss - cfg.protection_dbm) / 10,
        (f.duty_cycle - cfg.duty_threshold) / (1 - cfg.duty_threshold),
        (cfg.var_threshold - f.amplitude_variance) / cfg.var_threshold,
        (f.adjacent_similarity - cfg.similarity_threshold) / cfg.similarity_threshold,
    )
    if all(m > 0 for m in margins[:1]) and all(m >= 0 for m in margins[1:3]) and margins[3] > 0:
        return Classification(TV, _clip01(min(margins)), f)
    bs_margins = [-m for m in margins[1:]]
    return Classification(SNOW_BS, _clip01(max(bs_margins)), f)


# -- synthetic trace families -------------------------------------------------

def rssi_readings(
    signal_dbm: np.ndarray,
    noise_dbm: float,
    rng: np.random.Generator,
    n_avg: int = 32,
) -> np.ndarray:
    """RSSI readings, each averaging ``n_avg`` complex samples of signal plus noise."""
    sig = np.asarray(signal_dbm, dtype=np.float64)
    n = sig.size
    amp = np.sqrt(10 ** (sig / 10))[:, None]
    noise = (rng.standard_normal((n, n_avg)) + 1j * rng.standard_normal((n, n_avg))) * math.sqrt(10 ** (noise_dbm / 10) / 2)
    phase = np.exp(2j * np.pi * rng.random((n, 1)))
    p = np.mean(np.abs(amp * phase + noise) ** 2, axis=1)
    return 10 * np.log10(p)


def tv_trace(
    channel: int,
    rss_dbm: float,
    adjacent_rss: float,
    rng: np.random.Generator,
    window: float = 0.1,
    reading_rate: float = 1e3,
    noise_dbm: float = -115.0,
) -> SignalTrace:
    n = max(1, int(round(window * reading_rate)))
    return SignalTrace(rssi_readings(np.full(n, rss_dbm), noise_dbm, rng), window, channel, adjacent_rss)


def burst_mask(n: int, reading_rate: float, burst: float, duty: float, phase: float) -> np.ndarray:
    """On/off mask of a periodic burst train sampled at ``reading_rate``."""
    period = burst / duty
    t = np.arange(n) / reading_rate + phase * period
    return np.mod(t, period) < burst


def bs_trace(
    channel: int,
    rss_dbm: float,
    adjacent_rss: float,
    rng: np.random.Generator,
    window: float = 0.1,
    reading_rate: float = 1e3,
    noise_dbm: float = -115.0,
    duty: float = 0.4,
    burst: float = 0.02,
    fading_db: float = 2.5,
    phase: float | None = None,
) -> SignalTrace:
    n = max(1, int(round(window * reading_rate)))
    if phase is None:
        phase = float(rng.random())
    on = burst_mask(n, reading_rate, burst, duty, phase)
    sig = np.where(on, rss_dbm + fading_db * rng.standard_normal(n), -np.inf)
    return SignalTrace(rssi_readings(sig, noise_dbm, rng), window, channel, adjacent_rss)


def noise_trace(
    channel: int,
    rng: np.random.Generator,
    window: float = 0.1,
    reading_rate: float = 1e3,
    noise_dbm: float = -115.0,
) -> SignalTrace:
    n = max(1, int(round(window * reading_rate)))
    return SignalTrace(rssi_readings(np.full(n, -np.inf), noise_dbm, rng), window, channel, noise_dbm)


# -- scanning -----------------------------------------------------------------

@dataclass(frozen=True)
class ScanPlan:
    channels: tuple
    strategy: str
    sense_bandwidth: float
    dwell: float
    slices_per_channel: int = 1

    def __post_init__(self):
        if self.strategy not in (NARROW, WIDE):
            raise DiscoveryError(f"unknown scan strategy {self.strategy!r}")

    @property
    def visits(self) -> list[tuple[int, int]]:
        return [(ch, k) for ch in self.channels for k in range(self.slices_per_channel)]

    def slice_center(self, channel: int, k: int) -> float:
        return channel_low_edge(channel) + (k + 0.5) * self.sense_bandwidth


def build_scan_plan(
    hint: Optional[Sequence[EightPointEntry]],
    full_band: Sequence[int] = TV_CHANNELS,
    strategy: str = NARROW,
    subcarrier_bandwidth: float = 200e3,
    dwell: float = 0.1,
    probe_span: float | None = None,
    preferred: Iterable[int] = (),
) -> ScanPlan:
    """Candidate channels ordered by frequency, cached serving channels first.

    Each channel is probed over ``probe_span`` (default two subcarrier widths);
    WIDE senses twice the subcarrier bandwidth per visit and so needs half
    the visits.
    """
    if hint is not None:
        cands = set()
        for entry in hint:
            if entry.in_bounds:
                cands |= set(entry.channels)
    else:
        cands = set(full_band)
    if not cands:
        raise DiscoveryError("scan plan has no candidate channels")
    ordered = sorted(cands)
    pref = [ch for ch in dict.fromkeys(preferred) if ch in cands]
    ordered = pref + [ch for ch in ordered if ch not in pref]
    sense_bw = subcarrier_bandwidth * (2 if strategy == WIDE else 1)
    span = probe_span if probe_span is not None else 2 * subcarrier_bandwidth
    slices = max(1, math.ceil(span / sense_bw - 1e-9))
    return ScanPlan(tuple(ordered), strategy, sense_bw, dwell, slices)


class DiscoveryWorld(Protocol):
    def sense(self, channel: int, slice_center: float, t: float, plan: ScanPlan) -> SignalTrace: ...

    def bs_on_channel(self, channel: int, t: float) -> Optional[Hashable]: ...


@dataclass
class DiscoveryResult:
    bs_id: Optional[Hashable]
    channel: Optional[int]
    slice_center: Optional[float]
    elapsed: float
    energy: float
    channels_visited: int
    visits: int
    verdicts: list = field(default_factory=list)


def discover(
    plan: ScanPlan,
    world: DiscoveryWorld,
    start_time: float = 0.0,
    rx_power_w: float = 3.8 * 5.4e-3,
    retune: float = 1e-3,
    wide_power_factor: float = 1.5,
    cfg: ClassifierConfig = DEFAULT_CLASSIFIER,
) -> DiscoveryResult:
    """Listen on each planned slice in turn and stop at the first BS verdict.

    Every visit costs one retune plus one dwell at receive power.
    """
    power = rx_power_w * (wide_power_factor if plan.strategy == WIDE else 1.0)
    t = start_time
    seen: set[int] = set()
    verdicts = []
    visits = 0
    for ch, k in plan.visits:
        t += retune + plan.dwell
        visits += 1
        seen.add(ch)
        center = plan.slice_center(ch, k)
        trace = world.sense(ch, center, t - plan.dwell, plan)
        verdict = classify(extract_features(trace, cfg), cfg)
        verdicts.append((ch, verdict.verdict))
        if verdict.verdict == SNOW_BS:
            elapsed = t - start_time
            return DiscoveryResult(world.bs_on_channel(ch, t), ch, center, elapsed, power * elapsed, len(seen), visits, verdicts)
    elapsed = t - start_time
    return DiscoveryResult(None, None, None, elapsed, power * elapsed, len(seen), visits, verdicts)


def discovery_backoff(attempt: int, base: float = 1.0, cap: float = 60.0) -> float:
    """Sleep before rescanning after the ``attempt``-th exhausted plan (0-based)."""
    return min(cap, base * 2.0 ** attempt)
