"""Link-level PHY models: packet error probability with residual-CFO ICI, and
the sample-level packet receiver the analytic model is cross-checked against."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..baseband import BPSK, OOK, Preamble, Subcarrier, _scheme, awgn, matched_filter, modulate
from ..cfo import apply_cfo

SAMPLES_PER_SYMBOL = 8


def db_to_lin(db: float) -> float:
    return 10 ** (db / 10)


def lin_to_db(x: float) -> float:
    return 10 * math.log10(x) if x > 0 else -math.inf


def spectral_overlap(delta_f: float, symbol_rate: float) -> float:
    """Fraction of a rectangular-pulse stream offset by ``delta_f`` that lands in
    a matched filter: sinc^2(delta_f / symbol_rate). Zero at non-zero integer
    multiples of the symbol rate, i.e. between orthogonal subcarriers."""
    x = math.pi * delta_f / symbol_rate
    if x == 0:
        return 1.0
    return (math.sin(x) / x) ** 2


def ber_bpsk(snr_lin: float) -> float:
    """Coherent BPSK, Q(sqrt(2 snr))."""
    return float(0.5 * special.erfc(math.sqrt(max(snr_lin, 0.0))))


def ber_ook(snr_lin: float) -> float:
    """Noncoherent OOK with a half-amplitude envelope threshold.

    The 0-symbol term is 1/2 exp(-snr/2) (Rayleigh tail); the 1-symbol term is
    the Rician CDF below threshold, which the high-SNR approximation drops.
    """
    g = max(snr_lin, 0.0)
    p0 = math.exp(-g / 2)
    p1 = float(special.chndtr(g, 2, 4 * g)) if g > 0 else 1.0
    return 0.5 * (p0 + p1)


def ber(snr_lin: float, scheme: str) -> float:
    return ber_bpsk(snr_lin) if _scheme(scheme) == BPSK else ber_ook(snr_lin)


def effective_snr_db(snr_db: float, residual_cfo: float, symbol_rate: float) -> float:
    att = spectral_overlap(residual_cfo, symbol_rate)
    return snr_db + lin_to_db(att)


def packet_error_probability(snr_db: float, residual_cfo: float, symbol_rate: float, bits: int, scheme: str = OOK) -> float:
    if not symbol_rate > 0:
        raise ValueError("symbol rate must be positive")
    eff = effective_snr_db(snr_db, residual_cfo, symbol_rate)
    if eff == -math.inf:
        return 1.0
    p = ber(db_to_lin(eff), scheme)
    # 1 - (1 - p)^bits without cancellation at tiny p
    return float(-math.expm1(bits * math.log1p(-p))) if p < 1 else 1.0


def noise_power_for_snr(snr_lin: float, scheme: str, sps: int, amplitude: float = 1.0) -> float:
    """Per-sample complex noise power giving bit SNR ``snr_lin`` at the matched filter."""
    a2 = amplitude**2
    if _scheme(scheme) == BPSK:
        return a2 * sps / snr_lin
    return a2 * sps / (2 * snr_lin)


def receive_packet_samples(
    bits: np.ndarray,
    snr_db: float,
    residual_cfo: float,
    symbol_rate: float,
    rng: np.random.Generator,
    scheme: str = OOK,
    preamble: Preamble = Preamble(),
    sps: int = SAMPLES_PER_SYMBOL,
) -> int:
    """Bit errors of one packet pushed through the sample-level chain.

    ``bits`` is the whole frame; its leading 32 bits are the preamble. OOK
    sets its decision threshold at half the mean envelope of the preamble's
    ones, so residual-CFO attenuation is tracked the way an AGC would.
    """
    scheme = _scheme(scheme)
    sc = Subcarrier(symbol_rate, symbol_rate)  # baseband stand-in, offset zero
    fs = symbol_rate * sps
    x = modulate(bits, scheme, sc, fs, symbol_rate=symbol_rate)
    if residual_cfo:
        x = apply_cfo(x, residual_cfo)
    x = awgn(x, noise_power_for_snr(db_to_lin(snr_db), scheme, sps), rng)
    z = matched_filter(x, sc, symbol_rate=symbol_rate)
    if scheme == BPSK:
        # data-aided phase reference from the preamble
        ref = np.asarray(preamble.bits) * 2.0 - 1.0
        rot = np.sum(z[: ref.size] * ref)
        z = z * np.exp(-1j * np.angle(rot)) if rot != 0 else z
        decided = (z.real > 0).astype(np.int8)
    else:
        ones = np.asarray(preamble.bits, dtype=bool)
        level = np.mean(np.abs(z[: ones.size][ones]))
        decided = (np.abs(z) > level / 2).astype(np.int8)
    return int(np.count_nonzero(decided != np.asarray(bits, dtype=np.int8)))
