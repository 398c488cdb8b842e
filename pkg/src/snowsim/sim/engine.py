"""Discrete-event SNOW world.

One event loop drives every node through join, CSMA data transfer and, when
it leaves its BS's range, the discover -> align -> join handoff. All
randomness comes from per-node generators and one world generator, each
derived from the run seed, so a (scenario, seed) pair replays exactly.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..alignment import AlignmentConfig, align
from ..assignment import AvailabilityScore, MobilityProfile, mobility_aware_assignment
from ..baseband import BPSK, Preamble, SampleBuffer, Subcarrier, _scheme, awgn, bandlimit, modulate, subcarrier_grid
from ..cfo import CfoEstimate, NoSignalError, apply_cfo, estimate_cfo
from ..discovery import (
    ClassifierConfig,
    DiscoveryError,
    WIDE,
    ScanPlan,
    SignalTrace,
    build_scan_plan,
    burst_mask,
    discover,
    discovery_backoff,
    rssi_readings,
)
from ..scenario import Scenario
from ..spectrum_db import PropagationModel, SpectrumMap, TV_CHANNELS, channel_for_freq, channel_low_edge
from . import phy
from .metrics import MetricsReport, build_report
from .mobility import doppler_at, step_mobility
from .model import (
    ALIGNING,
    ASSOCIATED,
    DISCOVERING,
    JOINING,
    OUT_OF_RANGE,
    RX,
    RX_WIDE,
    TX,
    BaseStationState,
    EnergyModel,
    EventQueue,
    HandoffRecord,
    LinkBudget,
    NodeState,
    SimError,
    Transmission,
)

READING_RATE = 1e3  # RSSI readings per second while scanning
CAPTURE_PAD = 96
RECENT_WINDOW = 0.05  # s; longer than any frame, so every overlap is still listed
WORLD_STREAM = 0
NODE_STREAM = 1


def node_rng(seed: int, node_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, NODE_STREAM, zlib.crc32(node_id.encode())]))


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class FrameLog:
    """One data frame on the air."""

    node_id: str
    bs_id: str
    start: float
    end: float
    bits: int
    delivered: bool
    sinr_db: float
    residual: float


class Simulation:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None, fidelity: Optional[str] = None):
        self.scn = scenario
        self.seed = scenario.world.seed if seed is None else int(seed)
        self.fidelity = fidelity or scenario.world.fidelity
        w, p = scenario.world, scenario.policy
        self.policy = p
        self.horizon = w.horizon
        self.scheme = _scheme(p.modulation)
        self.preamble = Preamble()
        self.energy = EnergyModel(p.voltage, p.rx_current, p.tx_current, p.idle_current, p.wide_power_factor)
        self.link = LinkBudget(15.0, PropagationModel(exponent=w.path_loss_exponent), w.noise_floor_dbm, p.sensitivity_dbm)
        self.spectrum = SpectrumMap(
            scenario.stations(), w.extent, w.resolution, model=PropagationModel(exponent=w.tv_path_loss_exponent)
        )
        self.classifier = ClassifierConfig(
            sensitivity_dbm=p.sensitivity_dbm, noise_floor_dbm=self.link.noise_floor(200e3)
        )
        self.rng = np.random.default_rng(np.random.SeedSequence([self.seed, WORLD_STREAM]))
        self.queue = EventQueue()
        self.now = 0.0
        self.recent: list[Transmission] = []
        self.frames: list[FrameLog] = []
        self.handoffs: list[HandoffRecord] = []
        self.latencies: dict[str, list] = {}
        self.ack_times: dict[str, list] = {}
        self.stats: dict[str, dict] = {}

        self.bss: dict[str, BaseStationState] = {}
        for spec in scenario.bss:
            self.bss[spec.id] = self._make_bs(spec)
        self.nodes: dict[str, NodeState] = {}
        for spec in scenario.nodes:
            loc = np.array(spec.location, dtype=np.float64)
            node = NodeState(
                id=spec.id,
                location=loc,
                velocity=np.zeros(2),
                ppm_true=spec.ppm,
                rng=node_rng(self.seed, spec.id),
                waypoints=(tuple(spec.location),) + tuple(spec.waypoints) if spec.waypoints else (),
                speed=spec.speed,
                mobility_rate=spec.rate,
                tx_power=spec.tx_power_dbm,
            )
            node.leg = 1 if spec.waypoints else 0
            if spec.speed > 0 and spec.waypoints:
                step_mobility(node, 1e-9)  # set initial heading
            self.nodes[spec.id] = node
            self.stats[spec.id] = {"generated": 0, "sent": 0, "delivered": 0, "dropped": 0, "cca_busy": 0,
                                   "joins": 0, "join_failures": 0, "unsent_drops": 0, "residuals": []}
            self.latencies[spec.id] = []
            self.ack_times[spec.id] = []
        self.specs = {s.id: s for s in scenario.nodes}

    # -- construction ---------------------------------------------------------

    def _make_bs(self, spec) -> BaseStationState:
        low = channel_low_edge(spec.channel)
        grid = subcarrier_grid(low, spec.bandwidth, spec.subcarrier_bandwidth, 0.0)
        join = grid[spec.join_subcarrier]
        center = low + spec.bandwidth / 2
        radius = self.link.range(spec.tx_power_dbm, center)
        period = spec.beacon_burst / spec.beacon_duty
        bs = BaseStationState(
            id=spec.id, location=tuple(spec.location), channel=spec.channel, band_low=low,
            bandwidth=spec.bandwidth, subcarriers=tuple(grid), join_subcarrier=join,
            tx_power=spec.tx_power_dbm, beacon_burst=spec.beacon_burst, beacon_duty=spec.beacon_duty,
            beacon_phase=float(self.rng.random() * period), coverage_radius=radius,
        )
        cells = {}
        for sc in bs.data_subcarriers:
            ch = channel_for_freq(sc.center_freq)
            if ch not in cells:
                cells[ch] = self.spectrum.coverage_cell_count(ch, bs.location, radius)
            bs.availability[sc] = cells[ch]
        return bs

    # -- link helpers ---------------------------------------------------------

    def rss(self, tx_power: float, a, b, freq: float) -> float:
        return self.link.rss(tx_power, _dist(a, b), freq)

    def downlink_rss(self, bs: BaseStationState, node: NodeState) -> float:
        return self.rss(bs.tx_power, bs.location, node.location, bs.join_subcarrier.center_freq)

    def link_snr(self, tx_power: float, tx_loc, rx_loc, sc: Subcarrier, interference_mw: float = 0.0) -> float:
        """SINR in dB on ``sc``: received power over thermal noise plus interference."""
        s = self.rss(tx_power, tx_loc, rx_loc, sc.center_freq)
        n = 10 ** (self.link.noise_floor(sc.bandwidth) / 10) + interference_mw
        return s - 10 * math.log10(n)

    def true_offset(self, node: NodeState, freq: float, bs: BaseStationState) -> float:
        """Oscillator offset plus Doppler toward ``bs`` at carrier ``freq``."""
        return node.ppm_true * freq / 1e6 + doppler_at(node.location, node.velocity, bs.location, freq)

    def residual(self, node: NodeState, freq: float, bs: BaseStationState) -> float:
        r = self.true_offset(node, freq, bs)
        if self.policy.cfo_compensation and node.cfo_estimate is not None:
            r -= node.cfo_estimate.at(freq)
        return r

    def airtime(self, nbytes: int, sc: Subcarrier) -> float:
        return 8 * nbytes / sc.bandwidth

    def preamble_time(self, sc: Subcarrier) -> float:
        return len(self.preamble.bits) / sc.bandwidth

    # -- CFO estimation (sample level or analytic) ----------------------------

    def estimate_offset(self, true_offset: float, snr_db: float, sc: Subcarrier, rng: np.random.Generator, sample: bool) -> float:
        rate = sc.bandwidth
        if sample:
            sps = phy.SAMPLES_PER_SYMBOL
            base = Subcarrier(rate, rate)
            x = modulate(self.preamble.bits, self.scheme, base, rate * sps, symbol_rate=rate)
            x = apply_cfo(x, true_offset)
            x = awgn(x, phy.noise_power_for_snr(phy.db_to_lin(snr_db), self.scheme, sps), rng)
            try:
                return estimate_cfo(x, rate, reference_freq=sc.center_freq, preamble=self.preamble, scheme=self.scheme).delta_f
            except NoSignalError:
                return 0.0
        # fine-lag phase noise of the lagged-product sum, mapped to Hz
        sps = phy.SAMPLES_PER_SYMBOL
        ones = np.asarray(self.preamble.bits, bool)
        pairs = max(1, int(np.count_nonzero(ones[16:] & ones[:16]) if self.scheme != BPSK else 16)) * sps
        rho = 2 * phy.db_to_lin(snr_db) / sps if self.scheme != BPSK else phy.db_to_lin(snr_db) / sps
        sigma_phi = math.sqrt(2 / (pairs * rho) + 1 / (pairs * rho) ** 2)
        return true_offset + rng.normal() * sigma_phi / (2 * math.pi * 16 / rate)

    # -- event plumbing -------------------------------------------------------

    def at(self, t: float, kind: str, **payload) -> None:
        if t <= self.horizon:
            self.queue.push(t, kind, payload)

    def run(self) -> MetricsReport:
        for spec in self.scn.nodes:
            node = self.nodes[spec.id]
            self.at(spec.start, "init", node=spec.id)
            if spec.packets > 0:
                self.at(spec.start, "gen", node=spec.id, k=0)
        if any(n.speed > 0 for n in self.nodes.values()):
            self.at(self.policy.mobility_tick, "tick")
        if self.nodes and self.bss:
            self.at(self.policy.beacon_interval, "beacon")
        while self.queue:
            t, _, kind, payload = self.queue.pop()
            self.now = t
            getattr(self, "_on_" + kind)(t, **payload)
        return build_report(self)

    # -- mobility and range ---------------------------------------------------

    def _on_tick(self, t: float) -> None:
        for node in self.nodes.values():
            if node.speed > 0:
                step_mobility(node, self.policy.mobility_tick)
        self.at(t + self.policy.mobility_tick, "tick")

    def _on_beacon(self, t: float) -> None:
        for node in self.nodes.values():
            if node.phase != ASSOCIATED:
                continue
            bs = self.bss[node.bs_id]
            if self.downlink_rss(bs, node) < self.link.sensitivity:
                node.weak_beacons += 1
            else:
                node.weak_beacons = 0
            if node.weak_beacons >= self.policy.out_of_range_beacons:
                node.set_phase(OUT_OF_RANGE, t)
                self._leave(node, bs)
                if not node.busy:
                    self._start_handoff(node, t)
        self.at(t + self.policy.beacon_interval, "beacon")

    def _leave(self, node: NodeState, bs: BaseStationState) -> None:
        bs.associations.pop(node.id, None)
        bs.cfo_table.pop(node.id, None)
        self._reassign(bs)

    def _reassign(self, bs: BaseStationState) -> None:
        if not bs.associations:
            return
        profiles = [MobilityProfile(nid, self.nodes[nid].mobility_rate) for nid in bs.associations]
        scores = [AvailabilityScore(sc, bs.availability[sc]) for sc in bs.data_subcarriers]
        bs.associations.update(mobility_aware_assignment(profiles, scores))

    # -- join -----------------------------------------------------------------

    def _on_init(self, t: float, node: str) -> None:
        n = self.nodes[node]
        spec = self.specs[node]
        bs = self.bss.get(spec.bs) if spec.bs else self._strongest_bs(n)
        if bs is None or self.downlink_rss(bs, n) < self.link.sensitivity:
            n.set_phase(DISCOVERING, t)
            self._start_discovery(n, t, HandoffRecord(n.id, None, t))
            return
        self._start_join(n, bs, t, None)

    def _strongest_bs(self, node: NodeState) -> Optional[BaseStationState]:
        best = None
        for bs in self.bss.values():
            r = self.downlink_rss(bs, node)
            if best is None or r > best[0]:
                best = (r, bs.id)
        return self.bss[best[1]] if best else None

    def _start_join(self, node: NodeState, bs: BaseStationState, t: float, record: Optional[HandoffRecord], attempt: int = 0) -> None:
        self._on_join_attempt(max(t, node.ledger.busy_until), node=node.id, bs=bs.id, record=record, attempt=attempt, began=t)

    def _on_join_attempt(self, t: float, node: str, bs: str, record, attempt: int, began: float) -> None:
        """Preamble + request up on the join subcarrier, preamble + grant down."""
        n, b = self.nodes[node], self.bss[bs]
        p = self.policy
        jsc = b.join_subcarrier
        t_req = self.airtime(p.join_bytes, jsc) + self.preamble_time(jsc)
        t_grant = t_req
        n.ledger.add(TX, t, t + t_req, "join")
        n.ledger.add(RX, t + t_req, t + t_req + t_grant, "join")
        end = t + t_req + t_grant
        sample = self.fidelity != "analytic"

        up_offset = self.true_offset(n, jsc.center_freq, b)
        up_snr = self.link_snr(n.tx_power, n.location, b.location, jsc)
        dn_snr = self.link_snr(b.tx_power, b.location, n.location, jsc)
        bits = 8 * p.join_bytes + len(self.preamble.bits)
        ok = self.rss(n.tx_power, n.location, b.location, jsc.center_freq) >= self.link.sensitivity
        ok = ok and self.downlink_rss(b, n) >= self.link.sensitivity
        ok = ok and n.rng.random() >= phy.packet_error_probability(up_snr, up_offset, jsc.bandwidth, bits, self.scheme)
        ok = ok and n.rng.random() >= phy.packet_error_probability(dn_snr, 0.0, jsc.bandwidth, bits, self.scheme)

        if ok:
            est = self.estimate_offset(up_offset, up_snr, jsc, n.rng, sample)
            b.cfo_table[n.id] = CfoEstimate.from_offset(est, jsc.center_freq, t)
            # downlink estimate: the node sees the BS shifted by minus its own offset
            dn = self.estimate_offset(-up_offset, dn_snr, jsc, n.rng, sample)
            n.downlink_estimate = CfoEstimate.from_offset(dn, jsc.center_freq, t + t_req)
            b.associations[n.id] = None
            self._reassign(b)
            self.at(end, "join_done", node=node, bs=bs, record=record, began=began, est=est)
            return
        if attempt + 1 >= p.join_retries:
            self.at(end, "join_failed", node=node, bs=bs, record=record, began=began)
            return
        wait = int(n.rng.integers(0, 2 ** min(attempt + 1, p.max_doublings))) * t_req
        self.at(end + wait, "join_attempt", node=node, bs=bs, record=record, attempt=attempt + 1, began=began)

    def _on_join_done(self, t: float, node: str, bs: str, record, began: float, est: float) -> None:
        n, b = self.nodes[node], self.bss[bs]
        jsc = b.join_subcarrier
        n.cfo_estimate = CfoEstimate.from_offset(est, jsc.center_freq, t)
        n.bs_id = b.id
        n.subcarrier = b.associations[n.id]
        n.weak_beacons = 0
        n.set_phase(ASSOCIATED, t)
        self.stats[node]["joins"] += 1
        if b.channel in n.channel_cache:
            n.channel_cache.remove(b.channel)
        n.channel_cache.insert(0, b.channel)
        del n.channel_cache[self.policy.channel_cache:]
        if record is not None:
            record.join += t - began
            record.join_energy += n.ledger.tagged_energy(self.energy, "join", began, t)
            record.to_bs = b.id
            record.subcarrier_bandwidth = n.subcarrier.bandwidth
            record.completed = True
            self.handoffs.append(record)
        self._next_packet(n, t)

    def _on_join_failed(self, t: float, node: str, bs: str, record, began: float) -> None:
        n = self.nodes[node]
        self.stats[node]["join_failures"] += 1
        b = self.bss[bs]
        b.associations.pop(node, None)
        if n.phase == JOINING:
            n.set_phase(DISCOVERING, t)
        if record is None:
            record = HandoffRecord(n.id, None, began)
        record.join += t - began
        record.join_energy += n.ledger.tagged_energy(self.energy, "join", began, t)
        self._start_discovery(n, t, record, skip={b.channel})

    # -- handoff: discover -> align -> join -----------------------------------

    def _start_handoff(self, node: NodeState, t: float) -> None:
        node.set_phase(DISCOVERING, t)
        self._start_discovery(node, t, HandoffRecord(node.id, node.bs_id, t))
        node.subcarrier = None

    def _start_discovery(self, node: NodeState, t: float, record: HandoffRecord, skip=frozenset()) -> None:
        self.at(max(t, node.ledger.busy_until), "discover", node=node.id, record=record, skip=frozenset(skip), began=t)

    def _scan_plan(self, node: NodeState, record: HandoffRecord, skip) -> ScanPlan:
        p = self.policy
        width = node.subcarrier.bandwidth if node.subcarrier else 200e3
        hint = None
        old = self.bss.get(record.from_bs) if record.from_bs else None
        if p.scan_hint and old is not None:
            hint = self.spectrum.eight_point_channel_list(old.location, old.coverage_radius)
            if not any(e.in_bounds and e.channels for e in hint):
                hint = None
        try:
            plan = build_scan_plan(hint, TV_CHANNELS, p.scan_strategy, width, p.dwell, preferred=node.channel_cache)
        except DiscoveryError:
            plan = build_scan_plan(None, TV_CHANNELS, p.scan_strategy, width, p.dwell, preferred=node.channel_cache)
        chans = tuple(ch for ch in plan.channels if ch not in skip) or plan.channels
        return ScanPlan(chans, plan.strategy, plan.sense_bandwidth, plan.dwell, plan.slices_per_channel)

    def _on_discover(self, t: float, node: str, record: HandoffRecord, skip, began: float) -> None:
        n = self.nodes[node]
        p = self.policy
        plan = self._scan_plan(n, record, skip)
        sensor = DiscoverySensor(self, n)
        res = discover(plan, sensor, t, self.energy.power(RX), p.retune, p.wide_power_factor, self.classifier)
        mode = RX_WIDE if plan.strategy == WIDE else RX
        n.ledger.add(mode, t, t + res.elapsed, "discovery")
        record.discovery_energy += res.energy
        record.scans += 1
        end = t + res.elapsed
        if res.bs_id is None:
            if res.channel is not None:
                # a BS verdict with no BS behind it; rescan without that channel
                skip = skip | {res.channel}
                wait = 0.0
            else:
                wait = discovery_backoff(record.scans - 1, p.discovery_backoff, p.discovery_backoff_cap)
            record.discovery += end + wait - began
            self.at(end + wait, "discover", node=node, record=record, skip=skip, began=end + wait)
            return
        record.discovery += end - began
        self.at(end, "align", node=node, record=record, bs=res.bs_id, center=res.slice_center, skip=skip)

    def _on_align(self, t: float, node: str, record: HandoffRecord, bs: str, center: float, skip) -> None:
        n, b = self.nodes[node], self.bss[bs]
        p = self.policy
        n.set_phase(ALIGNING, t)
        world = AlignmentSensor(self, n, b, center)
        noise = self.link.noise_floor(1.2e6)
        cfg = AlignmentConfig(psd_averages=p.psd_averages, threshold_dbm=noise + 3.0, noise_floor_dbm=noise,
                              timeout=p.alignment_timeout)
        res = align(world, t, cfg, self.energy.power(RX))
        n.ledger.add(RX, t, t + res.elapsed, "alignment")
        record.alignment += res.elapsed
        record.alignment_energy += res.energy
        record.alignment_attempts += 1
        end = t + res.elapsed
        if not res.success:
            n.set_phase(DISCOVERING, end)
            self._start_discovery(n, end, record, skip=skip | {b.channel})
            return
        pat = res.pattern
        n.subcarrier = Subcarrier(center + pat.center_offset, pat.candidate_bandwidth)
        n.set_phase(JOINING, end)
        self._start_join(n, b, end, record)

    # -- traffic --------------------------------------------------------------

    def _on_gen(self, t: float, node: str, k: int) -> None:
        n = self.nodes[node]
        spec = self.specs[node]
        if spec.interval > 0:
            n.queue.append(t)
            self.stats[node]["generated"] += 1
            if k + 1 < spec.packets:
                self.at(t + spec.interval, "gen", node=node, k=k + 1)
        else:
            n.queue.extend([t] * spec.packets)
            self.stats[node]["generated"] += spec.packets
        if n.phase == ASSOCIATED and not n.busy:
            self._next_packet(n, t)

    def _next_packet(self, node: NodeState, t: float) -> None:
        node.busy = False
        if node.phase == OUT_OF_RANGE:
            self._start_handoff(node, t)
            return
        if node.phase != ASSOCIATED or not node.queue:
            return
        node.busy = True
        node.attempts = 0
        node.transmitted = False
        bs = self.bss[node.bs_id]
        node.subcarrier = bs.associations[node.id]
        p = self.policy
        t = max(t, node.ledger.busy_until)
        if p.cfo_compensation and p.reestimation_period > 0 and node.cfo_estimate is not None:
            if t - node.cfo_estimate.estimated_at >= p.reestimation_period:
                t = self._reestimate(node, bs, t)
        self.at(t, "cca", node=node.id)

    def _reestimate(self, node: NodeState, bs: BaseStationState, t: float) -> float:
        """Preamble exchange on the node's subcarrier; returns when the node may continue."""
        sc = node.subcarrier
        tp = self.preamble_time(sc)
        node.ledger.add(TX, t, t + tp, "reestimate")
        node.ledger.add(RX, t + tp, t + 2 * tp, "reestimate")
        off = self.true_offset(node, sc.center_freq, bs)
        snr = self.link_snr(node.tx_power, node.location, bs.location, sc)
        est = self.estimate_offset(off, snr, sc, node.rng, self.fidelity != "analytic")
        node.cfo_estimate = CfoEstimate.from_offset(est, sc.center_freq, t)
        bs.cfo_table[node.id] = node.cfo_estimate
        return t + 2 * tp

    def _busy(self, node: NodeState, t: float) -> bool:
        """Energy on the node's subcarrier during the CCA window ending at ``t``.

        A frame that starts exactly at ``t`` was not on the air while the node
        listened, so two nodes finishing CCA together both transmit.
        """
        sc = node.subcarrier
        t0 = t - self.policy.cca_time
        for tr in self.recent:
            if tr.node_id == node.id or not (tr.start < t and tr.end > t0):
                continue
            if phy.spectral_overlap(tr.actual_freq - sc.center_freq, sc.bandwidth) < 0.5:
                continue
            if self.rss(tr.tx_power, tr.location, node.location, tr.nominal_freq) >= self.link.sensitivity:
                return True
        return False

    def _on_cca(self, t: float, node: str) -> None:
        n = self.nodes[node]
        p = self.policy
        if n.phase != ASSOCIATED:
            # left the BS's range while backing off; the packet waits for the next BS
            self._next_packet(n, t)
            return
        end = t + p.cca_time
        n.ledger.add(RX, t, end, "cca")
        self.at(end, "cca_done", node=node)

    def _on_cca_done(self, t: float, node: str) -> None:
        n = self.nodes[node]
        if self._busy(n, t):
            self.stats[node]["cca_busy"] += 1
            self._retry(n, t)
            return
        self._tx_start(n, t)

    def _retry(self, node: NodeState, t: float) -> None:
        p = self.policy
        node.attempts += 1
        if node.attempts > p.retry_limit:
            node.queue.pop(0)
            self.stats[node.id]["dropped"] += 1
            if not node.transmitted:
                self.stats[node.id]["unsent_drops"] += 1
            self._next_packet(node, t)
            return
        window = 2 ** min(node.attempts, p.max_doublings)
        slots = int(node.rng.integers(0, window))
        unit = self.airtime(self.specs[node.id].packet_bytes, node.subcarrier)
        self.at(t + slots * unit, "cca", node=node.id)

    def _tx_start(self, node: NodeState, t: float) -> None:
        bs = self.bss[node.bs_id]
        sc = node.subcarrier
        nbytes = self.specs[node.id].packet_bytes
        dur = self.airtime(nbytes, sc)
        res = self.residual(node, sc.center_freq, bs)
        loc = (float(node.location[0]), float(node.location[1]))
        tr = Transmission(node.id, bs.id, t, t + dur, sc.center_freq, sc.center_freq + res, sc.bandwidth,
                          node.tx_power, loc,
                          {b.id: self.rss(node.tx_power, loc, b.location, sc.center_freq) for b in self.bss.values()})
        self.recent = [x for x in self.recent if x.end > t - RECENT_WINDOW]
        self.recent.append(tr)
        node.ledger.add(TX, t, t + dur, "data")
        node.transmitted = True
        self.stats[node.id]["sent"] += 1
        self.stats[node.id]["residuals"].append(abs(res))
        self.at(t + dur, "tx_end", node=node.id, tr=tr)

    def _on_tx_end(self, t: float, node: str, tr: Transmission) -> None:
        n = self.nodes[node]
        b = self.bss[tr.bs_id]
        p = self.policy
        sc = Subcarrier(tr.nominal_freq, tr.symbol_rate)
        interference = 0.0
        for other in self.recent:
            if other is tr or other.end <= tr.start or other.start >= tr.end:
                continue
            w = phy.spectral_overlap(other.actual_freq - tr.nominal_freq, tr.symbol_rate)
            if w > 0:
                interference += w * 10 ** (other.rss_at[b.id] / 10)
        signal = tr.rss_at[b.id]
        if self.scn.world.shadowing_db > 0:
            signal += n.rng.normal() * self.scn.world.shadowing_db
        noise = 10 ** (self.link.noise_floor(tr.symbol_rate) / 10)
        sinr = signal - 10 * math.log10(noise + interference)
        nbits = 8 * self.specs[node].packet_bytes
        res = tr.actual_freq - tr.nominal_freq
        if signal < self.link.sensitivity:
            ok = False
        elif self.fidelity == "sample":
            bits = np.concatenate([np.asarray(self.preamble.bits, np.int8),
                                   n.rng.integers(0, 2, max(0, nbits - len(self.preamble.bits)), dtype=np.int8)])
            ok = phy.receive_packet_samples(bits[:nbits], sinr, res, tr.symbol_rate, n.rng, self.scheme, self.preamble) == 0
        else:
            ok = n.rng.random() >= phy.packet_error_probability(sinr, res, tr.symbol_rate, nbits, self.scheme)
        self.frames.append(FrameLog(node, b.id, tr.start, tr.end, nbits, ok, sinr, res))
        if ok:
            self.stats[node]["delivered"] += 1
        if not p.ack:
            born = n.queue.pop(0)
            if ok:
                self.latencies[node].append(t - born)
                self.ack_times[node].append(t)
            self._next_packet(n, t)
            return
        ack_t = self.airtime(p.ack_bytes, sc) + self.preamble_time(sc) if p.ack_bytes else self.preamble_time(sc)
        n.ledger.add(RX, t, t + ack_t, "ack")
        if ok and p.ack_feedback and p.cfo_compensation and n.cfo_estimate is not None:
            # the BS measures what is left of the offset and returns it in the ACK
            measured = self.estimate_offset(res, sinr, sc, n.rng, self.fidelity == "sample")
            n.cfo_estimate = CfoEstimate.from_offset(n.cfo_estimate.at(sc.center_freq) + measured, sc.center_freq,
                                                     n.cfo_estimate.estimated_at)
        self.at(t + ack_t, "ack_done", node=node, ok=ok)

    def _on_ack_done(self, t: float, node: str, ok: bool) -> None:
        n = self.nodes[node]
        if ok:
            born = n.queue.pop(0)
            self.latencies[node].append(t - born)
            self.ack_times[node].append(t)
            self._next_packet(n, t)
            return
        self._retry(n, t)


# -- world views handed to the discovery and alignment routines -----------------

class DiscoverySensor:
    """RSS traces a scanning node would record on each channel."""

    def __init__(self, sim: Simulation, node: NodeState):
        self.sim = sim
        self.node = node

    def _bs_rss(self, channel: int, t: float):
        best = None
        for bs in self.sim.bss.values():
            if channel_for_freq(bs.join_subcarrier.center_freq) != channel:
                continue
            r = self.sim.downlink_rss(bs, self.node)
            if best is None or r > best[0]:
                best = (r, bs)
        return best

    def _mean_level(self, channel: int, noise: float) -> float:
        if channel not in TV_CHANNELS:
            return noise
        lin = 10 ** (noise / 10)
        tv = self.sim.spectrum.total_rss(channel, self.node.location)
        if tv > -math.inf:
            lin += 10 ** (tv / 10)
        bs = self._bs_rss(channel, self.sim.now)
        if bs is not None:
            lin += bs[1].beacon_duty * 10 ** (bs[0] / 10)
        return 10 * math.log10(lin)

    def sense(self, channel: int, slice_center: float, t: float, plan: ScanPlan) -> SignalTrace:
        sim = self.sim
        rng = self.node.rng
        noise = sim.link.noise_floor(plan.sense_bandwidth)
        n = max(1, int(round(plan.dwell * READING_RATE)))
        tv = sim.spectrum.total_rss(channel, self.node.location)
        lin = np.full(n, 10 ** (tv / 10) if tv > -math.inf else 0.0)
        bs = self._bs_rss(channel, t)
        if bs is not None:
            rss, b = bs
            sc = b.join_subcarrier
            if abs(sc.center_freq - slice_center) < (sc.bandwidth + plan.sense_bandwidth) / 2:
                times = t + np.arange(n) / READING_RATE
                on = ((times - b.beacon_phase) % b.beacon_period) < b.beacon_burst
                fade = 2.5 * rng.standard_normal(n)
                lin = lin + np.where(on, 10 ** ((rss + fade) / 10), 0.0)
        with np.errstate(divide="ignore"):
            sig = 10 * np.log10(lin)
        rss = rssi_readings(sig, noise, rng)
        adj = [self._mean_level(c, noise) for c in (channel - 1, channel + 1)]
        adjacent = 10 * math.log10(np.mean([10 ** (a / 10) for a in adj]))
        return SignalTrace(rss, plan.dwell, channel, adjacent)

    def bs_on_channel(self, channel: int, t: float):
        best = self._bs_rss(channel, t)
        if best is None or best[0] < self.sim.link.sensitivity:
            return None
        return best[1].id


class AlignmentSensor:
    """Complex baseband of the 1.2 MHz band around ``center``: the BS's join-subcarrier beacons plus noise."""

    def __init__(self, sim: Simulation, node: NodeState, bs: BaseStationState, center: float, bandwidth: float = 1.2e6):
        self.sim = sim
        self.node = node
        self.bs = bs
        self.center = center
        self.bandwidth = bandwidth
        sc = bs.join_subcarrier
        self.visible = abs(sc.center_freq - center) + sc.bandwidth / 2 <= bandwidth / 2 + 1e-6
        self.rss = sim.downlink_rss(bs, node)
        self.noise_mw = 10 ** (sim.link.noise_floor(bandwidth) / 10)

    def next_activity(self, t: float):
        if not self.visible:
            return None
        return self.bs.burst_at_or_after(t)

    def capture(self, t: float, n: int, sample_rate: float) -> SampleBuffer:
        rng = self.node.rng
        sc = self.bs.join_subcarrier
        times = t + np.arange(n) / sample_rate
        x = np.zeros(n, dtype=np.complex128)
        if self.visible:
            sps = int(round(sample_rate / sc.bandwidth))
            pad = CAPTURE_PAD
            nsym = -(-(n + 2 * pad) // sps)
            bits = rng.integers(0, 2, nsym)
            sig = modulate(bits, BPSK, sc, sample_rate, reference_freq=self.center, start_time=t - pad / sample_rate)
            # filter transients stay in the discarded margins
            sig = bandlimit(sig, sc, reference_freq=self.center).samples[pad : pad + n]
            on = ((times - self.bs.beacon_phase) % self.bs.beacon_period) < self.bs.beacon_burst
            x += np.where(on, sig, 0) * math.sqrt(10 ** (self.rss / 10))
        buf = SampleBuffer(x, sample_rate, t)
        return awgn(buf, self.noise_mw, rng)


def run(scenario: Scenario, seed: Optional[int] = None, fidelity: Optional[str] = None) -> MetricsReport:
    return Simulation(scenario, seed, fidelity).run()
