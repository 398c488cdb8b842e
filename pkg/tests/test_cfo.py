import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snowsim.baseband import BPSK, OOK, Preamble, SampleBuffer, Subcarrier, awgn, modulate
from snowsim.cfo import (
    LIGHT_SPEED,
    CfoError,
    CfoEstimate,
    DopplerParams,
    NoSignalError,
    apply_cfo,
    compensate,
    doppler_offset,
    estimate_cfo,
    ppm_from_offset,
    ppm_to_offset,
    reestimation_due,
    signed_doppler,
)

RATE = 200e3
SPS = 8
FS = RATE * SPS
PRE = Preamble()


def preamble_buf(start_time=0.0, scheme=BPSK):
    return modulate(PRE.bits, scheme, Subcarrier(RATE, RATE), FS, symbol_rate=RATE, start_time=start_time)


def test_zero_offset_is_identity(rng):
    buf = SampleBuffer(rng.standard_normal(64) + 1j * rng.standard_normal(64), 1e6)
    assert apply_cfo(buf, 0.0) is buf


def test_inverse_rotation(rng):
    buf = SampleBuffer(rng.standard_normal(256) + 1j * rng.standard_normal(256), 1e6, 0.37)
    back = apply_cfo(apply_cfo(buf, 1234.5), -1234.5)
    np.testing.assert_allclose(back.samples, buf.samples, rtol=1e-12, atol=1e-12)


def test_phase_advance_per_sample():
    buf = SampleBuffer(np.ones(100), 1e6)
    y = apply_cfo(buf, 1e3)
    step = np.angle(y.samples[1:] * np.conj(y.samples[:-1]))
    np.testing.assert_allclose(step, 2 * np.pi * 1e-3, rtol=1e-9)


def test_apply_cfo_rejects_beyond_nyquist():
    with pytest.raises(CfoError):
        apply_cfo(SampleBuffer(np.ones(4), 1e3), 600.0)


@given(st.floats(-4e5, 4e5), st.floats(0, 1.0))
def test_power_preserved(df, t0):
    rng = np.random.default_rng(7)
    buf = SampleBuffer(rng.standard_normal(128) + 1j * rng.standard_normal(128), 1e6, t0)
    assert apply_cfo(buf, df).energy() == pytest.approx(buf.energy(), rel=1e-12)


def test_estimate_zero_offset():
    est = estimate_cfo(preamble_buf(), RATE, reference_freq=500e6)
    assert abs(est.delta_f) < 1e-3


def test_estimate_1500_hz():
    est = estimate_cfo(apply_cfo(preamble_buf(), 1500.0), RATE, reference_freq=500e6)
    assert est.delta_f == pytest.approx(1500.0, abs=0.1)
    assert est.ppm == pytest.approx(3.0, rel=1e-9)


@given(st.floats(-0.45 * RATE, 0.45 * RATE), st.floats(0, 5.0), st.sampled_from([BPSK, OOK]))
def test_noiseless_estimate_within_coarse_range(df, t0, scheme):
    buf = apply_cfo(preamble_buf(t0, scheme), df)
    est = estimate_cfo(buf, RATE, reference_freq=500e6, scheme=scheme)
    assert abs(est.delta_f - df) <= 0.1


def test_rms_error_at_30db(rng):
    base = preamble_buf()
    for df in (-5e3, 0.0, 5e3):
        errs = [
            estimate_cfo(awgn(apply_cfo(base, df), 1e-3, rng), RATE, reference_freq=500e6).delta_f - df
            for _ in range(500)
        ]
        assert math.sqrt(np.mean(np.square(errs))) < 20


def test_estimate_rejects_short_and_silent():
    with pytest.raises(CfoError):
        estimate_cfo(SampleBuffer(np.ones(10), FS), RATE, reference_freq=500e6)
    with pytest.raises(NoSignalError):
        estimate_cfo(SampleBuffer(np.zeros(32 * SPS), FS), RATE, reference_freq=500e6)


def test_total_offset_is_additive():
    # oscillator offset and Doppler land on the same rotation; the estimator sees the sum
    osc, dop = 2500.0, doppler_offset(DopplerParams(17.88, 500e6))
    buf = apply_cfo(apply_cfo(preamble_buf(), osc), dop)
    est = estimate_cfo(buf, RATE, reference_freq=500e6)
    assert est.delta_f == pytest.approx(osc + dop, abs=0.1)


def test_compensate_exact_inverse(rng):
    buf = SampleBuffer(rng.standard_normal(200) + 1j * rng.standard_normal(200), FS, 0.01)
    est = CfoEstimate.from_offset(777.0, 500e6)
    np.testing.assert_allclose(compensate(apply_cfo(buf, 777.0), est).samples, buf.samples, rtol=1e-12, atol=1e-12)


def test_compensate_zero_estimate_is_identity(rng):
    buf = SampleBuffer(rng.standard_normal(16) + 0j, FS)
    assert compensate(buf, CfoEstimate.from_offset(0.0, 500e6)) is buf


def test_residual_after_compensation_at_30db(rng):
    base = preamble_buf()
    residuals = []
    for _ in range(200):
        rx = awgn(apply_cfo(base, 3000.0), 1e-3, rng)
        est = estimate_cfo(rx, RATE, reference_freq=500e6)
        left = compensate(apply_cfo(base, 3000.0), est)
        residuals.append(estimate_cfo(left, RATE, reference_freq=500e6).delta_f)
    assert math.sqrt(np.mean(np.square(residuals))) < 20


def test_ppm_examples():
    assert ppm_to_offset(2, 500e6) == 1000.0
    assert ppm_to_offset(0, 612e6) == 0.0
    assert ppm_to_offset(ppm_from_offset(1e3, 500e6), 600e6) == pytest.approx(1200.0, rel=1e-12)


@given(st.floats(-1e5, 1e5), st.floats(1e6, 1e9))
def test_ppm_chain(df, f):
    assert ppm_to_offset(ppm_from_offset(df, f), f) == pytest.approx(df, rel=1e-12, abs=1e-12)


@given(st.floats(-1e4, 1e4), st.floats(1e6, 1e9))
def test_estimate_ppm_consistency(df, f):
    est = CfoEstimate.from_offset(df, f)
    assert est.ppm == pytest.approx(1e6 * df / f, rel=1e-9, abs=1e-15)


def test_doppler_examples():
    assert doppler_offset(DopplerParams(0.0, 500e6)) == 0.0
    assert doppler_offset(DopplerParams(17.88, 500e6)) == pytest.approx(29.8, abs=0.1)
    assert doppler_offset(DopplerParams(1.4, 500e6)) == pytest.approx(2.33, abs=0.01)
    assert doppler_offset(DopplerParams(17.88, 500e6)) == pytest.approx(17.88 / 2.998e8 * 500e6, rel=1e-15)


@given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(1e8, 1e9))
def test_doppler_monotone_in_speed(a, b, f):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert doppler_offset(DopplerParams(lo, f)) < doppler_offset(DopplerParams(hi, f))


@given(st.floats(0.1, 100), st.floats(1e8, 1e9), st.floats(1e8, 1e9))
def test_doppler_monotone_in_carrier(v, f1, f2):
    if f1 == f2:
        return
    lo, hi = sorted((f1, f2))
    assert doppler_offset(DopplerParams(v, lo)) < doppler_offset(DopplerParams(v, hi))


def test_doppler_rejects_superluminal():
    with pytest.raises(CfoError):
        DopplerParams(LIGHT_SPEED, 500e6)


def test_signed_doppler_sign():
    assert signed_doppler(-10.0, 500e6) == -signed_doppler(10.0, 500e6) < 0


@pytest.mark.parametrize("last,now,period,due", [(0, 0.5, 1.0, False), (0, 1.0, 1.0, True), (2.0, 3.5, 1.0, True)])
def test_reestimation_due(last, now, period, due):
    assert reestimation_due(last, now, period) is due


def test_reestimation_due_rejects_bad_input():
    with pytest.raises(CfoError):
        reestimation_due(2.0, 1.0, 1.0)
    with pytest.raises(CfoError):
        reestimation_due(0.0, 1.0, 0.0)
