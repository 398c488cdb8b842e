"""Sample-level D-OFDM primitives.

All buffers are complex baseband. When a ``reference_freq`` is given, a
subcarrier's absolute ``center_freq`` is turned into an offset from it;
otherwise the subcarrier sits at 0 Hz of the buffer.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

BPSK = "bpsk"
OOK = "ook"
SCHEMES = (BPSK, OOK)

ALLOWED_BANDWIDTHS = (100e3, 200e3, 400e3, 600e3)

_MAGIC = b"SNBF"
_HEADER = struct.Struct("<4sdI")  # magic, sample_rate, count -> 16 bytes


class BasebandError(ValueError):
    pass


class AliasingError(BasebandError):
    pass


def _scheme(scheme: str) -> str:
    s = scheme.lower()
    if s == "ask":
        s = OOK
    if s not in SCHEMES:
        raise BasebandError(f"unknown modulation scheme {scheme!r}")
    return s


@dataclass(frozen=True)
class Subcarrier:
    center_freq: float
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise BasebandError("subcarrier bandwidth must be positive")
        if not self.center_freq > self.bandwidth / 2:
            raise BasebandError("subcarrier center must exceed half its bandwidth")

    @property
    def low(self) -> float:
        return self.center_freq - self.bandwidth / 2

    @property
    def high(self) -> float:
        return self.center_freq + self.bandwidth / 2


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.complex128)
        if x.ndim != 1:
            raise BasebandError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise BasebandError("samples must be finite")
        if not self.sample_rate > 0:
            raise BasebandError("sample_rate must be positive")
        if self.start_time < 0:
            raise BasebandError("start_time must be non-negative")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        """Absolute time of every sample."""
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def power(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def replace(self, samples: np.ndarray) -> "SampleBuffer":
        return SampleBuffer(samples, self.sample_rate, self.start_time)

    def to_bytes(self) -> bytes:
        """Little-endian float32 interleaved re/im after a 16-byte header."""
        inter = np.empty(2 * self.samples.size, dtype="<f4")
        inter[0::2] = self.samples.real
        inter[1::2] = self.samples.imag
        return _HEADER.pack(_MAGIC, float(self.sample_rate), self.samples.size) + inter.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SampleBuffer":
        if len(blob) < _HEADER.size:
            raise BasebandError("buffer blob shorter than header")
        magic, rate, count = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise BasebandError("bad magic in sample buffer blob")
        body = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
        if body.size != 2 * count:
            raise BasebandError(f"expected {count} samples, found {body.size // 2}")
        return cls(body[0::2].astype(np.float64) + 1j * body[1::2].astype(np.float64), rate)


DEFAULT_PREAMBLE_BITS = (1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 1, 0, 1) * 2


@dataclass(frozen=True)
class Preamble:
    bits: tuple = DEFAULT_PREAMBLE_BITS
    split: int = 16

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != 32:
            raise BasebandError("preamble must be exactly 32 bits")
        if any(b not in (0, 1) for b in bits):
            raise BasebandError("preamble bits must be binary")
        if self.split != 16:
            raise BasebandError("preamble split must be 16")
        object.__setattr__(self, "bits", bits)

    @property
    def coarse(self) -> tuple:
        return self.bits[: self.split]

    @property
    def fine(self) -> tuple:
        return self.bits[self.split :]


def samples_per_symbol(sample_rate: float, symbol_rate: float) -> int:
    ratio = sample_rate / symbol_rate
    sps = int(round(ratio))
    if sps < 1 or abs(ratio - sps) > 1e-9 * ratio:
        raise BasebandError(
            f"sample_rate {sample_rate:g} is not an integer multiple of symbol rate {symbol_rate:g}"
        )
    return sps


def _offset(sc: Subcarrier, reference_freq: float | None) -> float:
    return 0.0 if reference_freq is None else sc.center_freq - reference_freq


def _rotate(x: np.ndarray, freq: float, sample_rate: float, start_time: float) -> np.ndarray:
    if freq == 0.0:
        return x
    t = start_time + np.arange(x.size) / sample_rate
    return x * np.exp(2j * np.pi * freq * t)


def modulate(
    bits: Sequence[int],
    scheme: str,
    subcarrier: Subcarrier,
    sample_rate: float,
    reference_freq: float | None = None,
    start_time: float = 0.0,
    symbol_rate: float | None = None,
) -> SampleBuffer:
    """Rectangular-pulse BPSK or OOK on one subcarrier.

    One bit per symbol; the symbol rate defaults to the subcarrier bandwidth.
    """
    scheme = _scheme(scheme)
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size == 0:
        raise BasebandError("cannot modulate an empty bit sequence")
    if np.any((b != 0) & (b != 1)):
        raise BasebandError("bits must be 0 or 1")
    offset = _offset(subcarrier, reference_freq)
    if sample_rate < 2 * (abs(offset) + subcarrier.bandwidth / 2):
        raise AliasingError(
            f"sample_rate {sample_rate:g} aliases a subcarrier at offset {offset:g} Hz"
        )
    sps = samples_per_symbol(sample_rate, symbol_rate or subcarrier.bandwidth)
    symbols = (2.0 * b - 1.0) if scheme == BPSK else b.astype(np.float64)
    x = np.repeat(symbols, sps).astype(np.complex128)
    return SampleBuffer(_rotate(x, offset, sample_rate, start_time), sample_rate, start_time)


def matched_filter(
    buf: SampleBuffer,
    subcarrier: Subcarrier,
    reference_freq: float | None = None,
    symbol_rate: float | None = None,
) -> np.ndarray:
    """Integrate-and-dump output per symbol, normalised to unit amplitude."""
    sps = samples_per_symbol(buf.sample_rate, symbol_rate or subcarrier.bandwidth)
    if len(buf) % sps:
        raise BasebandError(f"buffer of {len(buf)} samples is not a whole number of symbols")
    x = _rotate(buf.samples, -_offset(subcarrier, reference_freq), buf.sample_rate, buf.start_time)
    return x.reshape(-1, sps).mean(axis=1)


def demodulate(
    buf: SampleBuffer,
    scheme: str,
    subcarrier: Subcarrier,
    reference_freq: float | None = None,
    symbol_rate: float | None = None,
    threshold: float = 0.5,
) -> np.ndarray:
    """Per-symbol decisions: coherent sign for BPSK, envelope threshold for OOK."""
    scheme = _scheme(scheme)
    z = matched_filter(buf, subcarrier, reference_freq, symbol_rate)
    if scheme == BPSK:
        return (z.real > 0).astype(np.int8)
    return (np.abs(z) > threshold).astype(np.int8)


@lru_cache(maxsize=64)
def _lowpass_taps(cutoff: float, sample_rate: float, atten_db: float) -> np.ndarray:
    nyq = sample_rate / 2
    width = min(0.25 * cutoff, nyq - cutoff) / nyq
    if width <= 0:
        return np.array([1.0])
    numtaps, beta = signal.kaiserord(atten_db, width)
    numtaps |= 1  # odd length keeps the filter centred
    taps = signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=sample_rate)
    taps.setflags(write=False)
    return taps


def lowpass(x: np.ndarray, cutoff: float, sample_rate: float, atten_db: float = 45.0) -> np.ndarray:
    """Zero-delay windowed-sinc low-pass."""
    if cutoff >= sample_rate / 2:
        return np.asarray(x, dtype=np.complex128)
    taps = _lowpass_taps(float(cutoff), float(sample_rate), float(atten_db))
    return np.convolve(x, taps, mode="same")


def bandlimit(buf: SampleBuffer, subcarrier: Subcarrier, reference_freq: float | None = None) -> SampleBuffer:
    """Confine a stream to its subcarrier, as a transmitter's RF filter would."""
    off = _offset(subcarrier, reference_freq)
    x = _rotate(buf.samples, -off, buf.sample_rate, buf.start_time)
    x = lowpass(x, subcarrier.bandwidth / 2, buf.sample_rate)
    return buf.replace(_rotate(x, off, buf.sample_rate, buf.start_time))


def synthesize_composite(
    streams: Iterable[tuple[Subcarrier, SampleBuffer]],
    center_freq: float,
    sample_rate: float | None = None,
) -> SampleBuffer:
    """Sum per-subcarrier baseband streams, each shifted to its offset from ``center_freq``."""
    streams = list(streams)
    if not streams:
        return SampleBuffer(np.zeros(0, dtype=np.complex128), sample_rate or 1.0)
    rate = streams[0][1].sample_rate
    start = streams[0][1].start_time
    for sc, buf in streams:
        if buf.sample_rate != rate:
            raise BasebandError("all streams must share one sample rate")
        if buf.start_time != start:
            raise BasebandError("all streams must share one start time")
        if rate < 2 * (abs(sc.center_freq - center_freq) + sc.bandwidth / 2):
            raise AliasingError(f"subcarrier at {sc.center_freq:g} Hz aliases at {rate:g} S/s")
    n = max(len(buf) for _, buf in streams)
    out = np.zeros(n, dtype=np.complex128)
    for sc, buf in streams:
        out[: len(buf)] += _rotate(buf.samples, sc.center_freq - center_freq, rate, start)
    return SampleBuffer(out, rate, start)


def _decimation(sample_rate: float, bandwidth: float) -> int:
    ratio = int(round(sample_rate / bandwidth))
    if abs(sample_rate / bandwidth - ratio) > 1e-9 * ratio:
        return 1
    best = 1
    for q in range(1, ratio + 1):
        if ratio % q == 0 and sample_rate / q >= 2 * bandwidth:
            best = q
    return best


def extract_subcarrier(
    composite: SampleBuffer,
    sc: Subcarrier,
    center_freq: float,
    decimate: bool = True,
) -> SampleBuffer:
    """Shift ``sc`` to 0 Hz, low-pass at half its bandwidth and decimate.

    The decimated rate keeps an integer number of samples per symbol and at
    least two samples per symbol.
    """
    off = sc.center_freq - center_freq
    if abs(off) + sc.bandwidth / 2 > composite.sample_rate / 2:
        raise BasebandError(f"subcarrier at {sc.center_freq:g} Hz lies outside the composite band")
    x = _rotate(composite.samples, -off, composite.sample_rate, composite.start_time)
    x = lowpass(x, sc.bandwidth / 2, composite.sample_rate)
    q = _decimation(composite.sample_rate, sc.bandwidth) if decimate else 1
    return SampleBuffer(x[::q], composite.sample_rate / q, composite.start_time)


def orthogonality(f_i: float, f_j: float, t_prime: float) -> float:
    """Closed form of the integral of cos(2 pi f_i t) cos(2 pi f_j t) over [0, T']."""
    if not t_prime > 0:
        raise ValueError("T' must be positive")
    return 0.5 * t_prime * (
        float(np.sinc(2 * (f_i - f_j) * t_prime)) + float(np.sinc(2 * (f_i + f_j) * t_prime))
    )


def count_orthogonal_subcarriers(bs_bandwidth: float, sc_bandwidth: float, overlap_fraction: float) -> int:
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    if not 0 < sc_bandwidth <= bs_bandwidth:
        raise ValueError("subcarrier bandwidth must be positive and no wider than the BS band")
    spacing = sc_bandwidth * (1 - overlap_fraction)
    return math.floor((bs_bandwidth - sc_bandwidth) / spacing + 1e-9) + 1


def subcarrier_grid(low_edge: float, bs_bandwidth: float, sc_bandwidth: float, overlap_fraction: float = 0.0) -> list[Subcarrier]:
    """Subcarriers packed from ``low_edge`` across a BS band."""
    n = count_orthogonal_subcarriers(bs_bandwidth, sc_bandwidth, overlap_fraction)
    step = sc_bandwidth * (1 - overlap_fraction)
    return [Subcarrier(low_edge + sc_bandwidth / 2 + k * step, sc_bandwidth) for k in range(n)]


def awgn(buf: SampleBuffer, noise_power: float, rng: np.random.Generator) -> SampleBuffer:
    """Add circular complex Gaussian noise of the given mean power per sample."""
    if noise_power <= 0:
        return buf
    n = len(buf)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return buf.replace(buf.samples + noise * math.sqrt(noise_power / 2))
