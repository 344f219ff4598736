"""Deterministic discrete-event core.

One run is one strictly sequential event loop over a single heap.  Heap
entries order by (time, priority, sequence): frame ends are delivered
before timers so an ACK arriving exactly at its deadline wins, and timers
fire before new frame starts so two nodes whose backoff expires in the
same microsecond both transmit and collide under the physical model.

A run executes three bootstrap phases on a collision-free schedule
(beacons and capability discovery, association, neighborhood probing),
then opens contention for `sim_duration_us` of measured steady state, and
finally drains in-flight exchanges so the medium bookkeeping balances.

Randomness comes from per-purpose streams derived from the master seed
(deployment, fading, backoff, traffic), so runs are bit-reproducible per
(config, seed).
"""

from __future__ import annotations

import heapq
import random
from math import log as _log
from dataclasses import dataclass, field

from . import mac
from .channel import ChannelModel, ChannelParams, Deployment, generate_deployment
from .frames import (BROADCAST, CapabilityInfo, Frame, FrameControl, FrameKind,
                     summarize)
from .metrics import ExchangeRecord, MetricsAccumulator
from .timing import TimingParams

__all__ = ["RunConfig", "RunResult", "Engine", "run",
           "TRAFFIC_UPLINK", "TRAFFIC_BIDIRECTIONAL"]

TRAFFIC_UPLINK = "uplink"
TRAFFIC_BIDIRECTIONAL = "bidirectional"

_PRIO_TX_END = 0
_PRIO_TIMER = 1
_PRIO_TX_START = 2
_PRIO_CALL = 3

# bootstrap schedule step widths, generous enough for one handshake + slack
_BEACON_STEP_US = 400
_ASSOC_STEP_US = 700
_PROBE_STEP_US = 700
_STEADY_MARGIN_US = 1000


@dataclass(frozen=True)
class RunConfig:
    timing: TimingParams = field(default_factory=TimingParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    payload_bits: int = 10_000
    str_enabled: bool = True
    ap_fd: bool = True
    policy: str = mac.POLICY_PREFER_BFD
    mitigation: str = mac.MITIGATION_NONE
    traffic: str = TRAFFIC_UPLINK
    rts_cts: bool = True
    probe_retries: int = 3
    sim_duration_us: int = 5_000_000

    def __post_init__(self):
        if self.policy not in mac.POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.mitigation not in mac.MITIGATIONS:
            raise ValueError(f"unknown mitigation {self.mitigation!r}")
        if self.traffic not in (TRAFFIC_UPLINK, TRAFFIC_BIDIRECTIONAL):
            raise ValueError(f"unknown traffic model {self.traffic!r}")
        if self.payload_bits < 0:
            raise ValueError("payload_bits must be nonnegative")
        if self.str_enabled and not self.rts_cts:
            raise ValueError("the STR protocol requires the RTS/CTS handshake")

    @property
    def effective_ap_fd(self) -> bool:
        return self.str_enabled and self.ap_fd


@dataclass
class RunResult:
    metrics: MetricsAccumulator
    trace: list | None
    violations: list
    deployment: Deployment
    served_stas: list


class Transmission:
    __slots__ = ("tx_id", "cidx", "frame", "t_start", "t_end", "fading",
                 "packet", "leg", "rec", "fdti", "ufd_check", "contention")

    def __init__(self, tx_id, frame, t_start, t_end, fdti=False):
        self.tx_id = tx_id
        self.cidx = -1              # compact index, filled by the engine
        self.frame = frame
        self.t_start = t_start
        self.t_end = t_end
        self.fading = {}            # rx compact index -> Rayleigh power draw
        self.packet = None
        self.leg = None
        self.rec = None
        self.fdti = fdti
        self.ufd_check = None
        self.contention = False


class Attempt:
    """One in-flight reception; interference accumulates as frames start."""

    __slots__ = ("rx_cidx", "rx_node", "trans", "interference_mw", "rsi", "void")

    def __init__(self, rx_cidx, rx_node, trans, interference_mw, rsi):
        self.rx_cidx = rx_cidx
        self.rx_node = rx_node
        self.trans = trans
        self.interference_mw = interference_mw
        self.rsi = rsi
        self.void = False


class Engine:
    def __init__(self, cfg: RunConfig, seed: int, *, deployment=None,
                 collect_trace=False, checks=False):
        self.cfg = cfg
        self.timing = cfg.timing
        self.seed = seed
        self.deployment = deployment or generate_deployment(cfg.channel, seed)
        self.channel = ChannelModel(cfg.channel, self.deployment)
        self.backoff_rng = random.Random(f"{seed}:backoff")
        self.traffic_rng = random.Random(f"{seed}:traffic")
        self.fading_rng = random.Random(f"{seed}:fading")
        self.metrics = MetricsAccumulator()
        self.trace = [] if collect_trace else None
        self.checks = checks
        self.violations = []
        self.now = 0
        self._heap = []
        self._seq = 0
        self.active = {}            # tx id -> Transmission
        self._active_list = []
        self._attempts = []
        self.probe_phase = False
        self.rx_log = None
        self._t_steady = None
        self._horizon = None
        self._tx_starts = 0
        self._tx_ends = 0
        self._exch_bind = {}        # node id -> (rec, initiator id)
        self._leg_by_uid = {}       # packet uid -> (rec, leg)
        self._build_nodes()

    # ------------------------------------------------------------------
    # topology / nodes

    def _build_nodes(self):
        cfg = self.cfg
        dep = self.deployment
        self.nodes = {}
        self.aps = []
        self.stas = []
        for ap in dep.aps:
            node = mac.ApNode(self, ap.node_id, cfg.effective_ap_fd)
            self.nodes[ap.node_id] = node
            self.aps.append(node)
        # STAs have a viable uplink only within their own transmission range
        # of the serving AP; the rest are deployed clutter that never offers
        # traffic and is left out of the event flow entirely.
        self.served_candidates = []
        for sta in dep.stas:
            ap_id = dep.association.get(sta.node_id)
            if ap_id is None:
                continue
            if self.channel.distance(sta.node_id, ap_id) <= cfg.channel.tx_range_sta_m:
                node = mac.StaNode(self, sta.node_id, sta.fd_capable, ap_id,
                                   served=True)
                self.nodes[sta.node_id] = node
                self.stas.append(node)
                self.served_candidates.append(node)
        self._active_nodes = self.aps + self.stas
        # compact indices and plain nested lists keep the SINR loop cheap
        for cidx, node in enumerate(self._active_nodes):
            node.cidx = cidx
        ch = self.channel
        ids = [n.node_id for n in self._active_nodes]
        self._mw = [[ch.mean_power_mw(t, r) for r in ids] for t in ids]
        self._rsi_mw = [ch.rsi_mw[n] for n in ids]
        self._noise_mw = ch.noise_mw
        self._threshold = ch.threshold
        self._listeners = {}
        for tx in self._active_nodes:
            lst = []
            for rx in self._active_nodes:
                if rx.node_id == tx.node_id:
                    continue
                sense = ch.senses(rx.node_id, tx.node_id)
                decode = ch.in_decode_range(tx.node_id, rx.node_id)
                if sense or decode:
                    lst.append((rx, sense, decode))
            self._listeners[tx.node_id] = lst

    def node(self, node_id: int):
        return self.nodes[node_id]

    def ap_capability(self) -> CapabilityInfo:
        return CapabilityInfo(0).with_fd_capable(self.cfg.effective_ap_fd)

    # ------------------------------------------------------------------
    # scheduling primitives

    def _push(self, time_us: int, prio: int, payload) -> None:
        assert time_us >= self.now, "event scheduled in the past"
        self._seq += 1
        heapq.heappush(self._heap, (time_us, prio, self._seq, payload))

    def schedule_tx(self, node, frame: Frame, t_start: int, *, payload_rate=None,
                    fdti=False, exchange_leg=None, packet=None, ufd_check=None,
                    contention=False) -> Transmission | None:
        if t_start < node.tx_reserved_until:
            # The radio is (or will be) mid-frame; a real MAC simply cannot
            # emit this response.  The peer recovers through its timeout.
            return None
        airtime = self.timing.tx_time(frame.kind, frame.payload_bits,
                                      payload_rate, fdti=fdti)
        trans = Transmission(node.node_id, frame, t_start, t_start + airtime,
                             fdti=fdti)
        trans.packet = packet
        trans.leg = exchange_leg
        trans.ufd_check = ufd_check
        trans.contention = contention
        node.tx_reserved_until = trans.t_end
        self._push(t_start, _PRIO_TX_START, ("tx-start", trans))
        return trans

    def schedule_timer(self, node, kind, time_us: int, gen: int) -> None:
        self._push(time_us, _PRIO_TIMER, ("timer", node, kind, gen))

    def _schedule_call(self, time_us: int, fn) -> None:
        self._push(time_us, _PRIO_CALL, ("call", fn))

    # ------------------------------------------------------------------
    # run control

    def contention_open(self, now: int) -> bool:
        return (self._t_steady is not None and self._t_steady <= now
                and now < self._horizon)

    def _measuring(self, now: int) -> bool:
        return (self._t_steady is not None and self._t_steady <= now
                and now < self._horizon)

    def run(self) -> RunResult:
        self._bootstrap()
        while self._heap:
            time_us, prio, _seq, payload = heapq.heappop(self._heap)
            self.now = time_us
            kind = payload[0]
            if kind == "tx-start":
                self._on_tx_start(payload[1])
            elif kind == "tx-end":
                self._on_tx_end(payload[1])
            elif kind == "timer":
                _, node, tkind, gen = payload
                node.on_timer(tkind, gen, self.now)
            else:
                payload[1]()
        self._finalize()
        return RunResult(self.metrics, self.trace, self.violations,
                         self.deployment, [s.node_id for s in self.stas])

    def _finalize(self):
        if self._tx_starts != self._tx_ends:
            self._violation(
                f"medium imbalance: {self._tx_starts} starts, {self._tx_ends} ends")
        self.metrics.sim_duration_us = self.cfg.sim_duration_us

    def _violation(self, msg: str) -> None:
        self.violations.append(f"t={self.now} {msg}")

    def _trace(self, kind: str, node_id: int, frame: Frame) -> None:
        if self.trace is not None:
            self.trace.append(f"{self.now} {kind} {node_id} {summarize(frame)}")

    # ------------------------------------------------------------------
    # medium events

    def _fade(self, trans: Transmission, rx_cidx: int) -> float:
        if not self.cfg.channel.fading:
            return 1.0
        draw = trans.fading.get(rx_cidx)
        if draw is None:
            draw = -_log(1.0 - self.fading_rng.random())
            trans.fading[rx_cidx] = draw
        return draw

    def _on_tx_start(self, trans: Transmission) -> None:
        node = self.nodes[trans.tx_id]
        if node.contention_start is not None:
            node._freeze_backoff(self.now)
        assert node.transmitting is None, "node already transmitting"
        if self.checks and trans.frame.kind is not FrameKind.ACK \
                and node.nav_until > self.now:
            self._violation(f"node {trans.tx_id} transmits "
                            f"{trans.frame.kind.name} under NAV")
        trans.cidx = node.cidx
        node.transmitting = trans
        self.active[trans.tx_id] = trans
        self._active_list.append(trans)
        self._tx_starts += 1
        self._trace("tx-start", trans.tx_id, trans.frame)
        self._observe_tx_start(trans)
        # existing reception attempts gain an interferer (or lose their
        # receiver to its own transmission)
        fading = self.cfg.channel.fading
        rng = self.fading_rng.random
        mw_row = self._mw[trans.cidx]
        fades = trans.fading
        for att in self._attempts:
            if att.trans is trans:
                continue
            if att.rx_node is node:
                if node.fd:
                    att.rsi = True
                else:
                    att.void = True
            elif fading:
                rx_cidx = att.rx_cidx
                draw = fades.get(rx_cidx)
                if draw is None:
                    draw = -_log(1.0 - rng())
                    fades[rx_cidx] = draw
                att.interference_mw += mw_row[rx_cidx] * draw
            else:
                att.interference_mw += mw_row[att.rx_cidx]
        for rx, sense, decode in self._listeners[trans.tx_id]:
            if decode:
                self._open_attempt(rx, trans)
            if sense:
                rx.notify_busy_start(trans, self.now)
        self._push(trans.t_end, _PRIO_TX_END, ("tx-end", trans))

    def _open_attempt(self, rx_node, trans: Transmission) -> None:
        rsi = False
        if rx_node.transmitting is not None:
            if not rx_node.fd:
                return  # a half-duplex node is deaf while transmitting
            rsi = True
        rx_cidx = rx_node.cidx
        rx_id = rx_node.node_id
        fading = self.cfg.channel.fading
        rng = self.fading_rng.random
        mw = self._mw
        interference = 0.0
        for t in self._active_list:
            if t is trans or t.tx_id == rx_id:
                continue
            p = mw[t.cidx][rx_cidx]
            if fading:
                fades = t.fading
                draw = fades.get(rx_cidx)
                if draw is None:
                    draw = -_log(1.0 - rng())
                    fades[rx_cidx] = draw
                p *= draw
            interference += p
        self._attempts.append(Attempt(rx_cidx, rx_node, trans, interference, rsi))

    def _on_tx_end(self, trans: Transmission) -> None:
        node = self.nodes[trans.tx_id]
        del self.active[trans.tx_id]
        self._active_list.remove(trans)
        node.transmitting = None
        self._tx_ends += 1
        self._trace("tx-end", trans.tx_id, trans.frame)
        # adjudicate receptions of this frame before medium-idle reactions
        if self._attempts:
            remaining = []
            mw_row = self._mw[trans.cidx]
            noise = self._noise_mw
            threshold = self._threshold
            for att in self._attempts:
                if att.trans is not trans:
                    remaining.append(att)
                    continue
                if att.void:
                    continue
                rx_cidx = att.rx_cidx
                signal = mw_row[rx_cidx] * self._fade(trans, rx_cidx)
                denom = noise + att.interference_mw
                if att.rsi:
                    denom += self._rsi_mw[rx_cidx]
                rx_node = att.rx_node
                ok = signal >= threshold * denom
                if self.rx_log is not None:
                    self.rx_log.append((trans.frame, trans.leg, trans.tx_id,
                                        rx_node.node_id, ok, signal, denom))
                if ok:
                    rx_node.on_frame_decoded(trans.frame, trans, self.now)
                    self._observe_decoded(rx_node, trans)
                else:
                    rx_node.on_reception_corrupted(self.now)
            self._attempts = remaining
        node.on_own_tx_end(trans, self.now)
        for rx, sense, _decode in self._listeners[trans.tx_id]:
            if sense:
                rx.notify_busy_end(trans, self.now)

    # ------------------------------------------------------------------
    # metrics plumbing

    def _observe_tx_start(self, trans: Transmission) -> None:
        frame = trans.frame
        if frame.kind is FrameKind.CTS and self._measuring(self.now):
            rec = ExchangeRecord("BFD" if frame.control.fd_flag else "HD")
            self.metrics.record_exchange(rec)
            self._exch_bind[trans.tx_id] = (rec, frame.dst)
            self._exch_bind[frame.dst] = (rec, frame.dst)
        elif frame.kind is FrameKind.DATA and trans.leg is not None:
            rec = None
            if trans.leg == "first" and not self.cfg.rts_cts:
                if self._measuring(self.now):
                    rec = ExchangeRecord("HD")
                    self.metrics.record_exchange(rec)
            else:
                bound = self._exch_bind.get(trans.tx_id)
                if bound is not None:
                    rec, initiator = bound
                    if trans.leg == "second":
                        rec.kind = "BFD" if frame.dst == initiator else "UFD"
            if trans.packet is not None:
                self._leg_by_uid[trans.packet.uid] = (rec, trans.leg)
            if self.checks and trans.ufd_check is not None:
                is_ufd, initiator, t4 = trans.ufd_check
                if is_ufd:
                    if trans.t_end != t4:
                        self._violation(
                            f"UFD second tx ends at {trans.t_end}, not t4={t4}")
                    d = self.channel.distance(frame.dst, initiator)
                    if d <= self.cfg.channel.cs_range_sta_m:
                        self._violation(
                            f"UFD receiver {frame.dst} within interference "
                            f"range of first transmitter {initiator} (d={d:.1f})")
                    ap = self.nodes[trans.tx_id]
                    if not ap.neighborhood.eligible(initiator, frame.dst):
                        self._violation(
                            f"UFD receiver {frame.dst} not eligible for "
                            f"first transmitter {initiator}")

    def _observe_decoded(self, rx_node, trans: Transmission) -> None:
        frame = trans.frame
        if self.probe_phase and frame.kind is FrameKind.CTS and rx_node.is_ap:
            if self._probe_queue and frame.src == self._probe_queue[0][0].node_id:
                self._probe_ok.add(frame.src)
        elif (frame.kind is FrameKind.ASSOC_RESPONSE
              and frame.dst == rx_node.node_id):
            self._assoc_ok.add(rx_node.node_id)

    def on_delivered(self, node, packet, now: int) -> None:
        rec_leg = self._leg_by_uid.pop(packet.uid, None)
        if rec_leg is not None and rec_leg[0] is not None:
            rec, leg = rec_leg
            if leg == "first":
                rec.first_bits = packet.bits
            else:
                rec.second_bits = packet.bits
        if self._measuring(now):
            self.metrics.record_delivery(node.node_id, packet.bits)

    def record_wait(self, node, wait_us: int, corrupted: bool, now: int) -> None:
        if not node.is_ap and self._measuring(now):
            self.metrics.record_wait(node.node_id, wait_us, corrupted)

    def count_retransmission(self, now: int) -> None:
        if self._measuring(now):
            self.metrics.retransmissions += 1

    def count_drop(self, packet) -> None:
        if self._measuring(self.now):
            self.metrics.dropped_packets += 1

    # ------------------------------------------------------------------
    # bootstrap: beacons, association, neighborhood probing

    def _bootstrap(self):
        t = 100
        for ap in self.aps:
            beacon = Frame(FrameControl(FrameKind.BEACON), 0, ap.node_id,
                           BROADCAST, capability=self.ap_capability())
            self.schedule_tx(ap, beacon, t)
            t += _BEACON_STEP_US
        self._assoc_queue = [(sta, self.cfg.probe_retries)
                             for sta in self.served_candidates]
        self._assoc_ok = set()
        self._schedule_call(t, self._assoc_step)

    # association: request/response with retries, collision-free schedule
    def _assoc_step(self):
        if not self._assoc_queue:
            self._assoc_done()
            return
        sta, tries = self._assoc_queue[0]
        cap = CapabilityInfo(0).with_fd_capable(sta.fd)
        req = Frame(FrameControl(FrameKind.ASSOC_REQUEST), 0, sta.node_id,
                    sta.ap_id, capability=cap)
        self.schedule_tx(sta, req, self.now)
        self._schedule_call(self.now + _ASSOC_STEP_US, self._assoc_check)

    def _assoc_check(self):
        sta, tries = self._assoc_queue[0]
        if sta.node_id in self._assoc_ok:
            self._assoc_queue.pop(0)
        elif tries > 1:
            self._assoc_queue[0] = (sta, tries - 1)
        else:
            self._assoc_queue.pop(0)
            sta.served = False
            sta._head = None
        self._assoc_step()

    def _assoc_done(self):
        self.stas = [s for s in self.stas if s.served]
        for ap in self.aps:
            ap.set_served([s.node_id for s in self.stas if s.ap_id == ap.node_id])
        if self.cfg.effective_ap_fd and self.cfg.policy != mac.POLICY_BFD_ONLY:
            self.probe_phase = True
            self._probe_queue = [(sta, self.cfg.probe_retries) for sta in self.stas]
            self._probe_ok = set()
            self._schedule_call(self.now + 200, self._probe_step)
        else:
            self._schedule_call(self.now + _STEADY_MARGIN_US, self._start_steady)

    # neighborhood discovery: the AP probes each STA with an RTS, the STA
    # answers with a CTS that its interference-range neighbors overhear
    def _probe_step(self):
        if not self._probe_queue:
            self._probe_done()
            return
        sta, tries = self._probe_queue[0]
        ap = self.nodes[sta.ap_id]
        dur = self.timing.sifs_us + self.timing.t_cts
        rts = Frame(FrameControl(FrameKind.RTS), dur, ap.node_id, sta.node_id)
        self.schedule_tx(ap, rts, self.now)
        self._schedule_call(self.now + _PROBE_STEP_US, self._probe_check)

    def _probe_check(self):
        sta, tries = self._probe_queue[0]
        if sta.node_id in self._probe_ok:
            self._probe_queue.pop(0)
        elif tries > 1:
            self._probe_queue[0] = (sta, tries - 1)
        else:
            self._probe_queue.pop(0)
            self.nodes[sta.ap_id].neighborhood.mark_unknown(sta.node_id)
        self._probe_step()

    def _probe_done(self):
        self.probe_phase = False
        for sta in self.stas:
            self.nodes[sta.ap_id].neighborhood.set_table(sta.node_id,
                                                         sta.neighbor_table)
        self._schedule_call(self.now + _STEADY_MARGIN_US, self._start_steady)

    def _start_steady(self):
        self._t_steady = self.now
        self._horizon = self.now + self.cfg.sim_duration_us
        for node in self._active_nodes:
            node.maybe_contend(self.now)


def run(cfg: RunConfig, seed: int, *, deployment=None, collect_trace=False,
        checks=False) -> RunResult:
    """Execute one simulation run; bit-reproducible per (cfg, seed)."""
    eng = Engine(cfg, seed, deployment=deployment, collect_trace=collect_trace,
                 checks=checks)
    return eng.run()
