"""Carrier frequency offset: injection, two-stage preamble estimation, ppm
scaling, Doppler and compensation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .baseband import (
    BPSK,
    BasebandError,
    Preamble,
    SampleBuffer,
    _scheme,
    samples_per_symbol,
)

LIGHT_SPEED = 2.998e8

COARSE_LAG_SYMBOLS = 1
FINE_LAG_SYMBOLS = 16


class CfoError(ValueError):
    pass


class NoSignalError(CfoError):
    pass


@dataclass(frozen=True)
class CfoEstimate:
    delta_f: float
    ppm: float
    reference_freq: float
    estimated_at: float = 0.0

    @classmethod
    def from_offset(cls, delta_f: float, reference_freq: float, estimated_at: float = 0.0) -> "CfoEstimate":
        return cls(delta_f, ppm_from_offset(delta_f, reference_freq), reference_freq, estimated_at)

    def at(self, freq: float) -> float:
        """Offset this estimate implies on another carrier."""
        return ppm_to_offset(self.ppm, freq)


ZERO_ESTIMATE = CfoEstimate(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class DopplerParams:
    speed: float
    carrier_freq: float
    light_speed: float = LIGHT_SPEED

    def __post_init__(self):
        if self.speed < 0:
            raise CfoError("speed must be non-negative")
        if self.speed >= self.light_speed:
            raise CfoError("speed must be below the speed of light")


def apply_cfo(buf: SampleBuffer, delta_f: float) -> SampleBuffer:
    """Rotate every sample by exp(j 2 pi delta_f t) at its absolute time."""
    if abs(delta_f) >= buf.sample_rate / 2:
        raise CfoError(f"offset {delta_f:g} Hz is beyond Nyquist for {buf.sample_rate:g} S/s")
    if delta_f == 0:
        return buf
    return buf.replace(buf.samples * np.exp(2j * np.pi * delta_f * buf.times()))


def compensate(buf: SampleBuffer, est: CfoEstimate) -> SampleBuffer:
    return apply_cfo(buf, -est.delta_f)


def ppm_from_offset(delta_f: float, freq: float) -> float:
    return 1e6 * delta_f / freq


def ppm_to_offset(ppm: float, f_i: float) -> float:
    return f_i * ppm / 1e6


def doppler_offset(p: DopplerParams) -> float:
    """Upper bound on the mobility-induced offset, (v / c) f_c."""
    return p.speed / p.light_speed * p.carrier_freq


def signed_doppler(radial_speed: float, carrier_freq: float) -> float:
    """Doppler with sign; positive radial speed means approaching."""
    mag = doppler_offset(DopplerParams(abs(radial_speed), carrier_freq))
    return math.copysign(mag, radial_speed)


def reestimation_due(last: float, now: float, period: float) -> bool:
    if now < last:
        raise CfoError("now precedes the last estimate")
    if not period > 0:
        raise CfoError("period must be positive")
    return now - last >= period


def _lag_product(z: np.ndarray, lag: int, lo: int, hi: int) -> complex:
    """Sum of z[n] conj(z[n - lag]) for n in [lo, hi)."""
    lo = max(lo, lag)
    if hi <= lo:
        return 0j
    return complex(np.sum(z[lo:hi] * np.conj(z[lo - lag : hi - lag])))


def estimate_cfo(
    preamble_rx: SampleBuffer,
    symbol_rate: float,
    *,
    reference_freq: float,
    preamble: Preamble = Preamble(),
    scheme: str = BPSK,
    power_threshold: float = 1e-12,
) -> CfoEstimate:
    """Coarse-then-fine offset estimate from a received 32-symbol preamble.

    The known preamble is stripped first, leaving the offset rotation. The
    coarse stage correlates the first 16 symbols at a one-symbol lag; the fine
    stage correlates the second 16 symbols against the first at a 16-symbol
    lag once the coarse estimate is removed.
    """
    scheme = _scheme(scheme)
    try:
        sps = samples_per_symbol(preamble_rx.sample_rate, symbol_rate)
    except BasebandError as exc:
        raise CfoError(str(exc)) from exc
    n_needed = len(preamble.bits) * sps
    if len(preamble_rx) < n_needed:
        raise CfoError(f"need {n_needed} samples for the preamble, got {len(preamble_rx)}")
    y = preamble_rx.samples[:n_needed]
    if float(np.mean(np.abs(y) ** 2)) < power_threshold:
        raise NoSignalError("preamble power below detection threshold")

    bits = np.asarray(preamble.bits, dtype=np.float64)
    ref = np.repeat(2 * bits - 1 if scheme == BPSK else bits, sps)
    z = y * ref
    half = preamble.split * sps
    fs = preamble_rx.sample_rate

    lag_c = COARSE_LAG_SYMBOLS * sps
    acc = _lag_product(z, lag_c, 0, half)
    if acc == 0:
        raise NoSignalError("no usable lagged pairs in the coarse half")
    coarse = np.angle(acc) / (2 * np.pi * lag_c / fs)

    n = np.arange(n_needed)
    z_fine = z * np.exp(-2j * np.pi * coarse * n / fs)
    lag_f = FINE_LAG_SYMBOLS * sps
    acc = _lag_product(z_fine, lag_f, half, n_needed)
    fine = np.angle(acc) / (2 * np.pi * lag_f / fs) if acc != 0 else 0.0

    return CfoEstimate.from_offset(float(coarse + fine), reference_freq, preamble_rx.start_time)
