import numpy as np
import pytest
from hypothesis import given, strategies as st

import families
from snowsim.discovery import (
    NARROW,
    NOISE,
    SNOW_BS,
    TV,
    WIDE,
    DiscoveryError,
    Features,
    ScanPlan,
    SignalTrace,
    bs_trace,
    build_scan_plan,
    classify,
    discover,
    discovery_backoff,
    extract_features,
)
from snowsim.spectrum_db import TV_CHANNELS, EightPointEntry, channel_low_edge

P_RX = 3.8 * 5.4e-3


def test_constant_trace_features():
    f = extract_features(SignalTrace(np.full(100, -60.0), 0.1, 21, -90.0))
    assert f.amplitude_variance == 0.0
    assert f.duty_cycle == 1.0
    assert f.mean_rss == pytest.approx(-60.0)
    assert f.adjacent_similarity == pytest.approx(30.0)


def test_half_on_trace_has_half_duty():
    rss = np.r_[np.full(50, -70.0), np.full(50, -120.0)]
    assert extract_features(SignalTrace(rss, 0.1, 21, -120.0)).duty_cycle == 0.5


def test_bursty_bs_fixture_features(rng):
    f = extract_features(bs_trace(21, -75.0, -76.0, rng, phase=0.0))
    assert f.amplitude_variance > 3
    assert f.duty_cycle < 0.8


def test_short_window_rejected():
    with pytest.raises(DiscoveryError):
        extract_features(SignalTrace(np.full(10, -60.0), 0.01, 21, -60.0))


def test_empty_trace_rejected():
    with pytest.raises(DiscoveryError):
        SignalTrace(np.array([]), 0.1, 21, -60.0)


@pytest.mark.parametrize(
    "features,verdict",
    [
        (Features(-120.0, 0.0, 0.0, 0.0), NOISE),
        (Features(-60.0, 0.1, 1.0, 20.0), TV),
        (Features(-75.0, 6.0, 0.4, 1.0), SNOW_BS),
    ],
)
def test_classify_rule_table(features, verdict):
    c = classify(features)
    assert c.verdict == verdict
    assert 0.0 <= c.confidence <= 1.0


@given(st.floats(-150, 0), st.floats(0, 50), st.floats(0, 1), st.floats(0, 60))
def test_confidence_bounds(m, v, d, a):
    assert 0.0 <= classify(Features(m, v, d, a)).confidence <= 1.0


def test_classifier_families_noiseless_and_noisy():
    rng = np.random.default_rng(3)
    for make, need in ((families.noiseless, 1.0), (families.noisy, 0.95)):
        hits = 0
        for i in range(300):
            kind = families.KINDS[i % 3]
            trace, cfg = make(kind, rng)
            hits += classify(extract_features(trace, cfg), cfg).verdict == kind
        assert hits / 300 >= need


def _hint(*sets):
    return [EightPointEntry((0.0, 0.0), frozenset(s)) for s in sets]


def test_plan_from_hint():
    plan = build_scan_plan(_hint({21}, {22}, {21, 22}))
    assert plan.channels == (21, 22)


def test_plan_full_band():
    plan = build_scan_plan(None)
    assert len(plan.channels) == 38 == len(TV_CHANNELS)
    assert list(plan.channels) == sorted(plan.channels)


def test_wide_halves_visits():
    narrow = build_scan_plan(None, strategy=NARROW, subcarrier_bandwidth=200e3)
    wide = build_scan_plan(None, strategy=WIDE, subcarrier_bandwidth=200e3)
    assert wide.sense_bandwidth == 2 * narrow.sense_bandwidth
    assert len(wide.visits) * 2 == len(narrow.visits)
    assert narrow.sense_bandwidth == 200e3


def test_plan_rejects_empty():
    with pytest.raises(DiscoveryError):
        build_scan_plan(_hint(set(), set()))


def test_plan_puts_cached_channels_first():
    plan = build_scan_plan(_hint({21, 22, 40}), preferred=[40, 99])
    assert plan.channels == (40, 21, 22)


class FakeWorld:
    """BS on some channels, TV on others, noise elsewhere."""

    def __init__(self, bs_channels=(), tv_channels=()):
        self.bs = set(bs_channels)
        self.tv = set(tv_channels)
        self.rng = np.random.default_rng(0)
        self.sensed = []

    def sense(self, channel, slice_center, t, plan):
        self.sensed.append((channel, t))
        if channel in self.bs:
            return bs_trace(channel, -80.0, -80.0, self.rng, plan.dwell, phase=0.0)
        if channel in self.tv:
            trace, _ = families.noiseless(TV, self.rng)
            return SignalTrace(trace.rss_series, plan.dwell, channel, trace.adjacent_rss)
        return SignalTrace(np.full(int(plan.dwell * 1e3), -118.0), plan.dwell, channel, -118.0)

    def bs_on_channel(self, channel, t):
        return f"bs{channel}" if channel in self.bs else None


def _plan(channels, dwell=0.1):
    return ScanPlan(tuple(channels), NARROW, 200e3, dwell)


def test_immediate_hit_costs_one_dwell():
    res = discover(_plan([21, 22]), FakeWorld(bs_channels=[21]), retune=0.0, rx_power_w=P_RX)
    assert res.bs_id == "bs21"
    assert res.elapsed == pytest.approx(0.1)
    assert res.energy == pytest.approx(P_RX * 0.1)
    assert res.channels_visited == 1


@pytest.mark.parametrize("k", [1, 3, 6])
def test_kth_channel_hit(k):
    chans = list(range(21, 29))
    res = discover(_plan(chans), FakeWorld(bs_channels=[chans[k - 1]], tv_channels=chans[: k - 1]), retune=1e-3)
    assert res.elapsed == pytest.approx(k * (0.1 + 1e-3))
    assert res.channels_visited == k


def test_no_bs_exhausts_plan():
    chans = list(range(21, 26))
    res = discover(_plan(chans), FakeWorld(tv_channels=[22]), retune=1e-3, rx_power_w=P_RX)
    assert res.bs_id is None and res.channel is None
    assert res.elapsed == pytest.approx(5 * 0.101)
    assert res.energy == pytest.approx(P_RX * res.elapsed)


def test_wide_costs_more_power():
    narrow = discover(_plan([21, 22, 23]), FakeWorld(), rx_power_w=P_RX)
    wide = discover(ScanPlan((21, 22, 23), WIDE, 400e3, 0.1), FakeWorld(), rx_power_w=P_RX, wide_power_factor=1.5)
    assert wide.energy == pytest.approx(1.5 * narrow.energy)


@given(st.integers(1, 10))
def test_energy_increases_with_channels_visited(k):
    chans = list(range(21, 21 + k + 1))
    fewer = discover(_plan(chans), FakeWorld(bs_channels=[chans[k - 1]]))
    more = discover(_plan(chans), FakeWorld(bs_channels=[chans[k]]))
    assert more.channels_visited > fewer.channels_visited
    assert more.energy > fewer.energy


def test_hint_dominance():
    world = FakeWorld(bs_channels=[30])
    hinted = build_scan_plan(_hint({25, 30}, {30, 33}), subcarrier_bandwidth=200e3, probe_span=200e3)
    full = build_scan_plan(None, subcarrier_bandwidth=200e3, probe_span=200e3)
    r_hint = discover(hinted, world)
    r_full = discover(full, FakeWorld(bs_channels=[30]))
    assert r_hint.channels_visited <= len(hinted.channels) <= len(full.channels)
    assert r_hint.channels_visited < r_full.channels_visited


def test_slice_centers_cover_probe_span():
    plan = build_scan_plan(_hint({21}), subcarrier_bandwidth=200e3)
    centers = [plan.slice_center(ch, k) for ch, k in plan.visits]
    low = channel_low_edge(21)
    assert centers == [low + 100e3, low + 300e3]


def test_backoff_doubles_to_cap():
    assert [discovery_backoff(a) for a in range(8)] == [1, 2, 4, 8, 16, 32, 60, 60]
