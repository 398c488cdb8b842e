import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from snowsim.baseband import BPSK, OOK, Preamble
from snowsim.sim.phy import (
    ber,
    ber_ook,
    effective_snr_db,
    packet_error_probability,
    receive_packet_samples,
    spectral_overlap,
)

RS = 200e3


def ook_ber_oracle(g):
    # envelope threshold at half the "on" amplitude; unit noise per dimension
    a = 2 * math.sqrt(g)
    p0 = stats.rayleigh.sf(a / 2)
    p1 = stats.rice.cdf(a / 2, b=a)
    return 0.5 * (p0 + p1)


@pytest.mark.parametrize("snr_db", [0, 3, 6, 10, 13, 16])
def test_ook_ber_matches_rice_oracle(snr_db):
    g = 10 ** (snr_db / 10)
    assert ber_ook(g) == pytest.approx(ook_ber_oracle(g), rel=1e-9)


def test_bpsk_ber_is_q_function():
    for snr_db in (0, 4, 8):
        g = 10 ** (snr_db / 10)
        assert ber(g, BPSK) == pytest.approx(stats.norm.sf(math.sqrt(2 * g)), rel=1e-12)


def test_pep_vanishes_at_high_snr():
    assert packet_error_probability(40, 0, RS, 320) < 1e-12
    assert packet_error_probability(40, 0, RS, 320, BPSK) < 1e-12


def test_residual_at_half_symbol_rate_costs_3_92_db():
    loss = 20 - effective_snr_db(20, RS / 2, RS)
    assert loss == pytest.approx(10 * math.log10((math.pi / 2) ** 2), abs=1e-12)
    assert loss == pytest.approx(3.92, abs=5e-3)


def test_orthogonal_neighbours_do_not_leak():
    for k in (1, 2, 5):
        assert spectral_overlap(k * RS, RS) == pytest.approx(0, abs=1e-30)
    assert spectral_overlap(0, RS) == 1.0
    assert packet_error_probability(30, RS, RS, 100) == 1.0


@given(st.floats(-5, 30), st.floats(0, 150e3), st.integers(1, 2000), st.integers(1, 2000))
def test_pep_monotone_in_bits(snr, res, a, b):
    lo, hi = sorted((a, b))
    assert packet_error_probability(snr, res, RS, lo) <= packet_error_probability(snr, res, RS, hi)


@given(st.floats(-5, 30), st.floats(0, 99e3), st.floats(0, 99e3))
def test_pep_monotone_in_residual(snr, r1, r2):
    lo, hi = sorted((r1, r2))
    assert packet_error_probability(snr, lo, RS, 320) <= packet_error_probability(snr, hi, RS, 320) + 1e-15


@given(st.floats(-5, 30), st.floats(0, 2))
def test_pep_monotone_in_snr(snr, step):
    assert packet_error_probability(snr + step, 1e3, RS, 320) <= packet_error_probability(snr, 1e3, RS, 320)


def test_pep_tiny_p_has_no_cancellation():
    p = packet_error_probability(25, 0, RS, 8, BPSK)
    g = 10**2.5
    assert p == pytest.approx(8 * stats.norm.sf(math.sqrt(2 * g)), rel=1e-6)
    assert p > 0


def test_rejects_bad_symbol_rate():
    with pytest.raises(ValueError):
        packet_error_probability(10, 0, 0, 10)


@pytest.mark.parametrize("scheme,snr_db,residual", [(OOK, 9.0, 0.0), (OOK, 12.0, 40e3), (BPSK, 5.0, 0.0)])
def test_sample_chain_agrees_with_analytic_ber(scheme, snr_db, residual):
    rng = np.random.default_rng(7)
    pre = np.asarray(Preamble().bits, dtype=np.int8)
    packets, payload = 150, 256
    errors = 0
    for _ in range(packets):
        bits = np.r_[pre, rng.integers(0, 2, payload).astype(np.int8)]
        errors += receive_packet_samples(bits, snr_db, residual, RS, rng, scheme)
    total = packets * (pre.size + payload)
    p = ber(10 ** (effective_snr_db(snr_db, residual, RS) / 10), scheme)
    # binomial 4-sigma plus 15 % for the preamble-estimated threshold
    assert abs(errors / total - p) <= 4 * math.sqrt(p * (1 - p) / total) + 0.15 * p


def test_sample_chain_clean_at_high_snr(rng):
    bits = np.r_[np.asarray(Preamble().bits, dtype=np.int8), rng.integers(0, 2, 400).astype(np.int8)]
    assert receive_packet_samples(bits, 30, 0, RS, rng, OOK) == 0
    assert receive_packet_samples(bits, 30, 0, RS, rng, BPSK) == 0
