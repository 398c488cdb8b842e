"""Subcarrier alignment with a newly discovered BS of unknown subcarrier width.

Time-domain energy sensing gates a frequency-domain step: once a burst is
seen, the PSD of the most recent M samples is matched against every
rectangular occupancy pattern the allowed bandwidths can produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .baseband import ALLOWED_BANDWIDTHS, SampleBuffer

SENSE_BANDWIDTH = 1.2e6
PSD_SIZE = 256
LATTICE = 50e3


class AlignmentError(ValueError):
    pass


class NoPatternError(AlignmentError):
    pass


@dataclass(frozen=True, eq=False)
class PsdVector:
    """Power per FFT bin, ordered from -fs/2 to +fs/2."""

    bins: np.ndarray
    bin_width: float
    total_power: float

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.float64)
        if np.any(b < 0):
            raise AlignmentError("PSD bins must be non-negative")
        object.__setattr__(self, "bins", b)

    @property
    def span(self) -> float:
        return self.bins.size * self.bin_width

    def freqs(self) -> np.ndarray:
        n = self.bins.size
        return (np.arange(n) - n // 2) * self.bin_width


@dataclass(frozen=True)
class OverlapPattern:
    candidate_bandwidth: float
    center_offset: float
    match_score: float
    fully_overlapped: bool = False


def dbm_to_mw(dbm: float) -> float:
    return 10 ** (dbm / 10)


def time_domain_sense(buf: SampleBuffer, preamble_len_samples: int, threshold_dbm: float) -> bool:
    """Busy iff some moving average of sample power over half a preamble exceeds the threshold.

    Sample magnitudes are in sqrt(mW).
    """
    window = int(preamble_len_samples) // 2
    if window < 1:
        raise AlignmentError("preamble too short for a sensing window")
    if len(buf) < window:
        raise AlignmentError(f"buffer of {len(buf)} samples is shorter than the {window}-sample window")
    p = np.abs(buf.samples) ** 2
    c = np.concatenate(([0.0], np.cumsum(p)))
    avg = (c[window:] - c[:-window]) / window
    return bool(np.max(avg) > dbm_to_mw(threshold_dbm))


def compute_psd(buf: SampleBuffer, m: int, window: str = "rect") -> PsdVector:
    """|FFT|^2 / M of the last ``m`` samples, so the bins sum to the windowed energy."""
    if m < 1 or m & (m - 1):
        raise AlignmentError("M must be a power of two")
    if len(buf) < m:
        raise AlignmentError(f"need {m} samples, buffer has {len(buf)}")
    x = buf.samples[-m:]
    if window == "hann":
        x = x * np.hanning(m)
    elif window != "rect":
        raise AlignmentError(f"unknown PSD window {window!r}")
    bins = np.fft.fftshift(np.abs(np.fft.fft(x)) ** 2) / m
    return PsdVector(bins, buf.sample_rate / m, float(np.sum(bins)))


def average_psd(psds: Sequence[PsdVector]) -> PsdVector:
    if not psds:
        raise AlignmentError("nothing to average")
    bins = np.mean([p.bins for p in psds], axis=0)
    return PsdVector(bins, psds[0].bin_width, float(np.sum(bins)))


def occupancy_template(n_bins: int, bin_width: float, bandwidth: float, offset: float) -> np.ndarray:
    """Rectangle over [offset - bw/2, offset + bw/2], rolled off over one bin at each edge."""
    f = (np.arange(n_bins) - n_bins // 2) * bin_width
    lo, hi = offset - bandwidth / 2, offset + bandwidth / 2
    # fraction of each bin [f - w/2, f + w/2] covered by the rectangle
    cover = np.clip(np.minimum(f + bin_width / 2, hi) - np.maximum(f - bin_width / 2, lo), 0, None) / bin_width
    t = cover.copy()
    edge = (f > lo - 1.5 * bin_width) & (f < hi + 1.5 * bin_width) & (cover < 1)
    t[edge] = np.maximum(t[edge], 0.5)
    return t


def candidate_patterns(span: float, candidates: Sequence[float] = ALLOWED_BANDWIDTHS, lattice: float = LATTICE):
    """(bandwidth, offset) pairs on the lattice whose subcarrier fits inside the sensed span."""
    out = []
    for bw in sorted(candidates):
        kmax = int(math.floor((span / 2 - bw / 2) / lattice + 1e-9))
        for k in range(-kmax, kmax + 1):
            out.append((float(bw), k * lattice))
    return out


def match_overlap_pattern(
    psd: PsdVector,
    candidates: Sequence[float] = ALLOWED_BANDWIDTHS,
    lattice: float = LATTICE,
    noise_floor: float = 0.0,
    score_floor: float = 0.5,
    min_excess: float = 0.5,
) -> OverlapPattern:
    """Best rectangular occupancy pattern for the PSD.

    ``noise_floor`` is the expected noise power per bin; it is removed before
    matching. A PSD whose excess power is below ``min_excess`` times the total
    noise power, or whose best score is below ``score_floor``, has no pattern.
    """
    n = psd.bins.size
    excess = np.clip(psd.bins - noise_floor, 0, None)
    if excess.sum() <= min_excess * noise_floor * n or excess.sum() == 0:
        raise NoPatternError("no signal above the noise floor")
    # amplitude domain flattens the in-band droop of rectangular-pulse signals
    excess = np.sqrt(excess)
    enorm = np.linalg.norm(excess)

    full = np.ones(n)
    best = OverlapPattern(psd.span, 0.0, float(excess @ full / (enorm * math.sqrt(n))), fully_overlapped=True)
    for bw, off in candidate_patterns(psd.span, candidates, lattice):
        t = occupancy_template(n, psd.bin_width, bw, off)
        score = float(excess @ t / (enorm * np.linalg.norm(t)))
        if score > best.match_score + 1e-12:
            best = OverlapPattern(bw, off, score)
    best = OverlapPattern(best.candidate_bandwidth, best.center_offset, min(1.0, best.match_score), best.fully_overlapped)
    if best.match_score < score_floor:
        raise NoPatternError(f"best pattern score {best.match_score:.3f} below floor")
    return best


class AlignmentWorld(Protocol):
    def next_activity(self, t: float) -> Optional[tuple[float, float]]:
        """Next (start, end) of BS activity in the node's sensing band at or after ``t``."""

    def capture(self, t: float, n: int, sample_rate: float) -> SampleBuffer:
        """``n`` samples of the sensing band starting at ``t``."""


@dataclass(frozen=True)
class AlignmentConfig:
    sense_bandwidth: float = SENSE_BANDWIDTH
    psd_size: int = PSD_SIZE
    psd_averages: int = 8
    preamble_len_samples: int = 64
    threshold_dbm: float = -100.0
    noise_floor_dbm: float = -115.0
    timeout: float = 10.0
    lattice: float = LATTICE
    candidates: tuple = ALLOWED_BANDWIDTHS


@dataclass
class AlignmentResult:
    success: bool
    pattern: Optional[OverlapPattern]
    elapsed: float
    energy: float
    iterations: int = 0
    ops: list = field(default_factory=list)


def align(
    world: AlignmentWorld,
    start_time: float = 0.0,
    cfg: AlignmentConfig = AlignmentConfig(),
    rx_power_w: float = 3.8 * 5.4e-3,
) -> AlignmentResult:
    """Sense until busy, collect PSD blocks from the burst, match; repeat until a pattern or timeout."""
    fs = cfg.sense_bandwidth
    m = cfg.psd_size
    window = cfg.preamble_len_samples // 2
    deadline = start_time + cfg.timeout
    noise_bin = dbm_to_mw(cfg.noise_floor_dbm)  # per-sample noise; |X|^2/M keeps it per bin
    t = start_time
    blocks: list[PsdVector] = []
    ops: list[str] = []
    iterations = 0

    def done(success, pattern, t_end):
        elapsed = t_end - start_time
        return AlignmentResult(success, pattern, elapsed, rx_power_w * elapsed, iterations, ops)

    while True:
        burst = world.next_activity(t)
        if burst is None or burst[0] >= deadline:
            return done(False, None, deadline)
        b_start, b_end = burst
        t = max(t, b_start)
        probe_start = max(start_time, t - window / fs)
        probe = world.capture(probe_start, int(round((t - probe_start) * fs)) + window, fs)
        ops.append("sense")
        if not time_domain_sense(probe, cfg.preamble_len_samples, cfg.threshold_dbm):
            t = b_end
            continue
        t_busy = t + window / fs
        fit = int((b_end - t_busy) * fs // m)
        take = min(fit, cfg.psd_averages - len(blocks))
        for k in range(take):
            blocks.append(compute_psd(world.capture(t_busy + k * m / fs, m, fs), m))
            ops.append("psd")
        t = t_busy + take * m / fs if take else b_end
        if t > deadline:
            return done(False, None, deadline)
        if len(blocks) < cfg.psd_averages:
            continue
        iterations += 1
        ops.append("match")
        try:
            pattern = match_overlap_pattern(
                average_psd(blocks), cfg.candidates, cfg.lattice, noise_floor=noise_bin
            )
        except NoPatternError:
            blocks.clear()
            continue
        if pattern.fully_overlapped:
            blocks.clear()
            continue
        return done(True, pattern, t)
