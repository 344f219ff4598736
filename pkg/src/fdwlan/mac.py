"""Per-node MAC state machines: legacy DCF plus the STR extensions.

Each node is driven exclusively by the single-threaded engine through a
small set of callbacks: frame decoded, reception corrupted, local medium
busy/idle transitions, own transmission ended, and timer expiries.  Nodes
never read the clock themselves; `now` always arrives with the event.

Contention follows standard DCF: wait DIFS (or EIFS after a corrupted
reception) once the medium goes idle, then count down backoff slots,
freezing the residue whenever the medium goes busy.  The full-duplex
extensions change only what a responder answers to an RTS (CTS versus
CTS-FD plus a planned concurrent transmission), the ACK instants and
timeouts of engaged nodes, and how overhearers treat corrupted receptions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, auto

from .frames import (BROADCAST, Frame, FrameControl, FrameKind, make_cts_fd,
                     make_fdti)

__all__ = ["TimerKind", "NodeState", "Packet", "DcfNode", "StaNode", "ApNode",
           "NeighborhoodState", "build_eligibility_matrix",
           "POLICY_PREFER_BFD", "POLICY_PREFER_UFD", "POLICY_BFD_ONLY",
           "POLICY_UFD_ONLY",
           "MITIGATION_NONE", "MITIGATION_CTS_FD", "MITIGATION_FDTI"]

POLICY_PREFER_BFD = "prefer_bfd"
POLICY_PREFER_UFD = "prefer_ufd"
POLICY_BFD_ONLY = "bfd_only"
POLICY_UFD_ONLY = "ufd_only"
POLICIES = (POLICY_PREFER_BFD, POLICY_PREFER_UFD, POLICY_BFD_ONLY, POLICY_UFD_ONLY)

MITIGATION_NONE = "none"
MITIGATION_CTS_FD = "cts-fd-aware"
MITIGATION_FDTI = "fdti"
MITIGATIONS = (MITIGATION_NONE, MITIGATION_CTS_FD, MITIGATION_FDTI)


class TimerKind(Enum):
    BACKOFF_DONE = auto()
    CTS_TIMEOUT = auto()
    ACK_TIMEOUT = auto()
    NAV_RECHECK = auto()
    NAV_RESET = auto()
    EXCHANGE_CLOSE = auto()


class NodeState(Enum):
    IDLE = auto()
    AWAIT_CTS = auto()       # sent an RTS, waiting for the response
    IN_EXCHANGE = auto()     # initiator between CTS reception and ACK/timeout
    RESPONDING = auto()      # responder engaged until the exchange closes


@dataclass
class Packet:
    uid: int
    dst: int
    bits: int
    retry_count: int = 0


@dataclass
class PendingAck:
    packet: Packet
    peer: int                # node expected to send the ACK
    deadline_us: int
    fd_exchange: bool


class NeighborhoodState:
    """AP-side neighborhood tables and UFD eligibility.

    `tables[s]` holds the ids whose probe CTS the STA `s` overheard; a STA
    whose own probe never got through is listed in `unknown` and is never
    selected as a UFD receiver, since other tables may silently miss it.
    """

    def __init__(self):
        self.tables = {}
        self.unknown = set()

    def set_table(self, sta: int, neighbors: set) -> None:
        self.tables[sta] = set(neighbors)

    def mark_unknown(self, sta: int) -> None:
        self.unknown.add(sta)

    def eligible(self, first_tx: int, candidate: int) -> bool:
        if candidate == first_tx or candidate in self.unknown:
            return False
        table = self.tables.get(first_tx)
        if table is None:
            return False
        return candidate not in table


def build_eligibility_matrix(state: NeighborhoodState, sta_ids) -> dict:
    """Dense eligibility view: matrix[i][j] = j may receive while i transmits."""
    return {i: {j: (i != j and state.eligible(i, j)) for j in sta_ids}
            for i in sta_ids}


class DcfNode:
    """Shared DCF machinery: medium tracking, NAV, backoff, initiator flow."""

    def __init__(self, engine, node_id: int, fd_capable: bool, is_ap: bool):
        self.engine = engine
        self.timing = engine.timing
        self.node_id = node_id
        self.cidx = -1                 # compact index assigned by the engine
        self.fd = fd_capable
        self.is_ap = is_ap
        self.state = NodeState.IDLE
        self.nav_until = 0
        self.last_rx_corrupted = False
        self.busy = set()              # transmissions currently sensed
        self.transmitting = None       # engine-owned Transmission or None
        self.tx_reserved_until = 0     # end of the latest own (scheduled) frame
        # backoff
        self.cw = self.timing.cw_min_slots
        self.remaining_slots = None
        self.backoff_gen = 0
        self.contention_start = None   # (t_idle, wait_us)
        # independent generation counters, one per timer kind
        self.cts_gen = 0
        self.ack_gen = 0
        self.close_gen = 0
        # exchange bookkeeping
        self.pending_ack = None
        self.exchange = None
        self.ctsfd_ignore_until = -1   # mitigation-1 window
        self.knows_ap_fd = False
        self.last_busy_start_us = -1
        self._nav_rts_guard = None     # (rts end, nav value) for NAV reset

    # -- traffic -------------------------------------------------------

    def has_traffic(self) -> bool:
        return False

    def head_packet(self) -> Packet | None:
        return None

    def contends(self) -> bool:
        return self.has_traffic()

    # -- medium / NAV ---------------------------------------------------

    def medium_idle(self, now: int) -> bool:
        return not self.busy and self.nav_until <= now

    def set_nav(self, until: int, now: int) -> None:
        if until <= self.nav_until:
            return
        self.nav_until = until
        if self.contention_start is not None:
            self._freeze_backoff(now)
        self.engine.schedule_timer(self, TimerKind.NAV_RECHECK, until, 0)

    def notify_busy_start(self, trans, now: int) -> None:
        if self.contention_start is not None:
            self._freeze_backoff(now)
        self.busy.add(trans.tx_id)
        self.last_busy_start_us = now
        self.on_sensed_tx(trans, now)

    def notify_busy_end(self, trans, now: int) -> None:
        self.busy.discard(trans.tx_id)
        self.maybe_contend(now)

    def on_sensed_tx(self, trans, now: int) -> None:
        pass

    # -- contention ------------------------------------------------------

    def _draw_backoff(self) -> None:
        self.remaining_slots = self.engine.backoff_rng.randrange(self.cw)

    def _record_wait_if_elapsed(self, now: int) -> None:
        """Count the interframe wait once its IFS portion actually elapsed.

        A wait that gets interrupted inside the IFS (for example an EIFS
        cancelled by an FD transmission indicator) never happened as far
        as the contention-unfairness statistics are concerned.
        """
        t_idle, wait_us, corrupted, recorded = self.contention_start
        if not recorded and now - t_idle >= wait_us:
            self.engine.record_wait(self, wait_us, corrupted, t_idle)
            self.contention_start = (t_idle, wait_us, corrupted, True)

    def _freeze_backoff(self, now: int) -> None:
        self._record_wait_if_elapsed(now)
        t_idle, wait_us, _corrupted, _rec = self.contention_start
        elapsed = now - (t_idle + wait_us)
        if elapsed > 0:
            consumed = min(self.remaining_slots, elapsed // self.timing.slot_us)
            self.remaining_slots -= consumed
        self.contention_start = None
        self.backoff_gen += 1

    def maybe_contend(self, now: int) -> None:
        if self.state is not NodeState.IDLE or self.transmitting is not None:
            return
        if now < self.tx_reserved_until:
            return
        if self.contention_start is not None or not self.contends():
            return
        if not self.engine.contention_open(now):
            return
        if not self.medium_idle(now):
            return
        if self.remaining_slots is None:
            self._draw_backoff()
        wait_us = (self.timing.eifs_us if self.last_rx_corrupted
                   else self.timing.difs_us)
        self.contention_start = (now, wait_us, self.last_rx_corrupted, False)
        self.backoff_gen += 1
        fire = now + wait_us + self.remaining_slots * self.timing.slot_us
        self.engine.schedule_timer(self, TimerKind.BACKOFF_DONE, fire,
                                   self.backoff_gen)

    def _on_backoff_done(self, now: int) -> None:
        self._record_wait_if_elapsed(now)
        self.contention_start = None
        if self.transmitting is not None or now < self.tx_reserved_until:
            return  # a response frame claimed the radio; re-contend after it
        self.remaining_slots = None
        if not self.engine.contention_open(now):
            return
        self.begin_tx_attempt(now)

    def begin_tx_attempt(self, now: int) -> None:
        """Contention won: send an RTS (or the data frame without RTS/CTS)."""
        packet = self.head_packet()
        if packet is None:
            return
        if self.engine.cfg.rts_cts:
            d0 = self.timing.rts_duration(packet.bits)
            rts = Frame(FrameControl(FrameKind.RTS), d0, self.node_id, packet.dst)
            self.state = NodeState.AWAIT_CTS
            self.engine.schedule_tx(self, rts, now)
        else:
            dur = self.timing.sifs_us + self.timing.t_ack
            data = Frame(FrameControl(FrameKind.DATA), dur, self.node_id,
                         packet.dst, payload_bits=packet.bits)
            self.state = NodeState.IN_EXCHANGE
            data_end = now + self.timing.tx_time(FrameKind.DATA, packet.bits)
            deadline = data_end + self.timing.ack_timeout_legacy_us
            self.pending_ack = PendingAck(packet, packet.dst, deadline, False)
            self.engine.schedule_tx(self, data, now, exchange_leg="first",
                                    packet=packet)

    # -- transmission completion ----------------------------------------

    def on_own_tx_end(self, trans, now: int) -> None:
        frame = trans.frame
        if frame.kind is FrameKind.RTS and self.state is NodeState.AWAIT_CTS:
            self.cts_gen += 1
            self.engine.schedule_timer(self, TimerKind.CTS_TIMEOUT,
                                       now + self.timing.cts_timeout_us,
                                       self.cts_gen)
        elif frame.kind is FrameKind.DATA and frame.control.fdti_flag:
            self._finish_exchange(now)
        elif frame.kind is FrameKind.DATA and trans.packet is not None:
            self._arm_ack_timer(trans, now)
        self.maybe_contend(now)

    def _arm_ack_timer(self, trans, now: int) -> None:
        if self.pending_ack is None or self.pending_ack.packet is not trans.packet:
            return
        self.ack_gen += 1
        self.engine.schedule_timer(self, TimerKind.ACK_TIMEOUT,
                                   self.pending_ack.deadline_us, self.ack_gen)

    # -- timers -----------------------------------------------------------

    def on_timer(self, kind: TimerKind, gen: int, now: int) -> None:
        if kind is TimerKind.BACKOFF_DONE:
            if gen == self.backoff_gen and self.contention_start is not None:
                self._on_backoff_done(now)
        elif kind is TimerKind.NAV_RECHECK:
            self.maybe_contend(now)
        elif kind is TimerKind.NAV_RESET:
            self._nav_reset_check(now)
        elif kind is TimerKind.CTS_TIMEOUT:
            if gen == self.cts_gen:
                self._tx_attempt_failed(now)
        elif kind is TimerKind.ACK_TIMEOUT:
            if gen == self.ack_gen:
                self._ack_timed_out(now)
        elif kind is TimerKind.EXCHANGE_CLOSE:
            if gen == self.close_gen:
                self._exchange_close(now)

    def _tx_attempt_failed(self, now: int) -> None:
        packet = self.head_packet()
        self.state = NodeState.IDLE
        self.pending_ack = None
        if packet is not None:
            self._register_failure(packet)
        self.maybe_contend(now)

    def _ack_timed_out(self, now: int) -> None:
        pending = self.pending_ack
        self.pending_ack = None
        self.state = NodeState.IDLE
        if pending is not None:
            self.engine.count_retransmission(now)
            self._register_failure(pending.packet)
        self.maybe_contend(now)

    def _register_failure(self, packet: Packet) -> None:
        packet.retry_count += 1
        if packet.retry_count > self.timing.retry_limit:
            self.engine.count_drop(packet)
            self.drop_head_packet(packet)
            self.cw = self.timing.cw_min_slots
        else:
            self.cw = min(self.cw * 2, self.timing.cw_max_slots)
        self.remaining_slots = None

    def drop_head_packet(self, packet: Packet) -> None:
        pass

    def _exchange_close(self, now: int) -> None:
        pass

    def _finish_exchange(self, now: int) -> None:
        self.state = NodeState.IDLE
        self.exchange = None
        self.maybe_contend(now)

    # -- reception ---------------------------------------------------------

    def view_of(self, frame: Frame) -> Frame:
        """FD nodes read the reserved bits; legacy nodes never see them."""
        return frame if self.fd else frame.legacy_view()

    def on_frame_decoded(self, frame: Frame, trans, now: int) -> None:
        frame = self.view_of(frame)
        self.last_rx_corrupted = False
        if self.contention_start is not None:
            # The wait in force was measured against a medium that in fact
            # carried this frame; restart it (a decoded FD transmission
            # indicator thus converts a pending EIFS into a DIFS).
            self.contention_start = None
            self.backoff_gen += 1
            restart = True
        else:
            restart = False
        if frame.dst == self.node_id:
            self._on_addressed(frame, trans, now)
        else:
            self._on_overheard(frame, trans, now)
        if restart:
            self.maybe_contend(now)

    def on_reception_corrupted(self, now: int) -> None:
        if (self.engine.cfg.mitigation == MITIGATION_CTS_FD and self.fd
                and now <= self.ctsfd_ignore_until):
            return
        self.last_rx_corrupted = True

    def _on_overheard(self, frame: Frame, trans, now: int) -> None:
        if self.state is not NodeState.IDLE:
            # A node committed to its own exchange defers by that exchange,
            # not by third-party NAV updates.
            return
        if frame.duration_us > 0:
            self.set_nav(trans.t_end + frame.duration_us, now)
            if frame.kind is FrameKind.RTS:
                # Standard NAV recovery: if the handshake this RTS announced
                # never starts (no transmission sensed), drop the stale NAV.
                self._nav_rts_guard = (trans.t_end, self.nav_until)
                check_at = (trans.t_end + 2 * self.timing.sifs_us
                            + self.timing.t_cts + 2 * self.timing.slot_us)
                self.engine.schedule_timer(self, TimerKind.NAV_RESET,
                                           check_at, 0)
        if (frame.kind is FrameKind.CTS and frame.control.fd_flag
                and self.engine.cfg.mitigation == MITIGATION_CTS_FD and self.fd):
            self.ctsfd_ignore_until = trans.t_end + frame.duration_us

    def _nav_reset_check(self, now: int) -> None:
        if self._nav_rts_guard is None:
            return
        rts_end, nav_value = self._nav_rts_guard
        self._nav_rts_guard = None
        if self.last_busy_start_us <= rts_end and self.nav_until == nav_value:
            self.nav_until = now
            self.maybe_contend(now)

    def _on_addressed(self, frame: Frame, trans, now: int) -> None:
        kind = frame.kind
        if kind is FrameKind.DATA:
            self._on_data(frame, trans, now)
        elif kind is FrameKind.ACK:
            self._on_ack(frame, trans, now)
        elif kind is FrameKind.CTS:
            self._on_cts(frame, trans, now)
        elif kind is FrameKind.RTS:
            self.respond_to_rts(frame, trans, now)

    # -- initiator path ------------------------------------------------------

    def _on_cts(self, frame: Frame, trans, now: int) -> None:
        if self.state is not NodeState.AWAIT_CTS:
            return
        packet = self.head_packet()
        if packet is None or frame.src != packet.dst:
            return
        self.cts_gen += 1  # cancel CTS timeout
        t2 = trans.t_end
        fd_exchange = bool(frame.control.fd_flag) and self.fd
        t_data = self.timing.tx_time(FrameKind.DATA, packet.bits)
        data_start = t2 + self.timing.sifs_us
        data_end = data_start + t_data
        dur = self.timing.sifs_us + self.timing.t_ack
        data = Frame(FrameControl(FrameKind.DATA), dur, self.node_id,
                     packet.dst, payload_bits=packet.bits)
        self.state = NodeState.IN_EXCHANGE
        if fd_exchange:
            deadline = self.timing.ack_deadline(data_end)  # t5: t4 sits at data_end
        else:
            deadline = data_end + self.timing.ack_timeout_legacy_us
        self.pending_ack = PendingAck(packet, packet.dst, deadline, fd_exchange)
        self.exchange = {"t4": data_end, "fd": fd_exchange}
        self.engine.schedule_tx(self, data, data_start, exchange_leg="first",
                                packet=packet)

    def _on_ack(self, frame: Frame, trans, now: int) -> None:
        pending = self.pending_ack
        if pending is None or frame.src != pending.peer:
            return
        self.ack_gen += 1  # cancel ACK timeout
        self.pending_ack = None
        self.engine.on_delivered(self, pending.packet, now)
        self.cw = self.timing.cw_min_slots
        self.remaining_slots = None
        self.packet_delivered(pending.packet)
        if self.state is NodeState.IN_EXCHANGE:
            self.state = NodeState.IDLE
            self.exchange = None
        self.maybe_contend(now)

    def packet_delivered(self, packet: Packet) -> None:
        pass

    # -- receiver path ---------------------------------------------------------

    def _on_data(self, frame: Frame, trans, now: int) -> None:
        if frame.control.fdti_flag and frame.dst == BROADCAST:
            return  # indicator only; the clean decode already reset EIFS state
        ack = Frame(FrameControl(FrameKind.ACK), 0, self.node_id, frame.src)
        # ACK a SIFS after the data ends, regardless of medium or NAV; a
        # node engaged in a concurrent transmission of its own (FD
        # exchange) waits for the later of the two ends.
        ack_at = max(trans.t_end, self.tx_reserved_until) + self.timing.sifs_us
        self.engine.schedule_tx(self, ack, ack_at)

    def respond_to_rts(self, frame: Frame, trans, now: int) -> None:
        pass


class StaNode(DcfNode):
    """Station MAC: saturated uplink initiator plus §V.C responder role."""

    def __init__(self, engine, node_id: int, fd_capable: bool, ap_id: int,
                 served: bool):
        super().__init__(engine, node_id, fd_capable, is_ap=False)
        self.ap_id = ap_id
        self.served = served
        self._uid = 0
        self._head = self._next_packet() if served else None
        self.neighbor_table = set()

    def _next_packet(self) -> Packet:
        self._uid += 1
        return Packet(uid=(self.node_id << 32) | self._uid, dst=self.ap_id,
                      bits=self.engine.cfg.payload_bits)

    def has_traffic(self) -> bool:
        return self._head is not None

    def head_packet(self) -> Packet | None:
        return self._head

    def drop_head_packet(self, packet: Packet) -> None:
        self._head = self._next_packet()

    def packet_delivered(self, packet: Packet) -> None:
        if self._head is packet:
            self._head = self._next_packet()

    # neighborhood probing: remember every STA whose probe CTS we sensed
    def on_sensed_tx(self, trans, now: int) -> None:
        if (self.engine.probe_phase and trans.frame.kind is FrameKind.CTS
                and not self.engine.node(trans.tx_id).is_ap
                and trans.tx_id != self.node_id):
            self.neighbor_table.add(trans.tx_id)

    def on_beacon(self, frame: Frame, now: int) -> None:
        if frame.src == self.ap_id and frame.capability is not None:
            self.knows_ap_fd = frame.capability.fd_capable

    def _on_addressed(self, frame: Frame, trans, now: int) -> None:
        if frame.kind is FrameKind.BEACON:
            return
        if frame.kind is FrameKind.ASSOC_RESPONSE:
            return
        super()._on_addressed(frame, trans, now)

    def _on_overheard(self, frame: Frame, trans, now: int) -> None:
        if frame.kind is FrameKind.BEACON:
            self.on_beacon(frame, now)
            return
        super()._on_overheard(frame, trans, now)

    def respond_to_rts(self, frame: Frame, trans, now: int) -> None:
        """AP-initiated flow: CTS-FD when we can answer with reverse data."""
        if self.state is not NodeState.IDLE or self.transmitting is not None:
            return
        if self.nav_until > now:
            return
        t1 = trans.t_end
        d0 = frame.duration_us
        d1 = self.timing.cts_duration(d0)
        t4 = self.timing.first_tx_end(t1, d0)
        t5 = self.timing.ack_deadline(t4)
        t2 = t1 + self.timing.sifs_us + self.timing.t_cts
        plan = None
        if (self.engine.cfg.str_enabled and self.fd and self.served
                and self.engine.probe_phase is False and self.has_traffic()):
            plan = self.timing.plan_second_tx_bfd(t2, t4, self._head.bits)
        if plan is not None:
            cts = make_cts_fd(frame.src, d1, src=self.node_id)
        else:
            cts = Frame(FrameControl(FrameKind.CTS), d1, self.node_id, frame.src)
        self.state = NodeState.RESPONDING
        self.exchange = {"initiator": frame.src, "t4": t4, "t5": t5,
                         "fd": plan is not None}
        self.engine.schedule_tx(self, cts, t1 + self.timing.sifs_us)
        if plan is not None:
            packet = self._head
            dur = max(t5 - plan.t_end, 0)
            data = Frame(FrameControl(FrameKind.DATA), dur, self.node_id,
                         frame.src, payload_bits=plan.payload_bits)
            self.pending_ack = PendingAck(packet, frame.src, t5, True)
            self.engine.schedule_tx(self, data, plan.t_start,
                                    payload_rate=plan.mcs_rate_bps,
                                    exchange_leg="second", packet=packet)
        self.close_gen += 1
        self.engine.schedule_timer(self, TimerKind.EXCHANGE_CLOSE, t5,
                                   self.close_gen)

    def _exchange_close(self, now: int) -> None:
        if self.state is NodeState.RESPONDING:
            self._finish_exchange(now)


class ApNode(DcfNode):
    """Access-point MAC: responder decision tree and saturated downlink."""

    def __init__(self, engine, node_id: int, fd_capable: bool):
        super().__init__(engine, node_id, fd_capable, is_ap=True)
        self.registry = {}            # sta id -> fd capability from association
        self.served_stas = []         # sta ids with a viable uplink
        self.neighborhood = NeighborhoodState()
        self.last_served = {}
        self._uid = 0
        self._heads = {}              # sta id -> downlink head packet
        self._bidir_dst = None

    def register_sta(self, sta_id: int, fd_capable: bool) -> None:
        self.registry[sta_id] = fd_capable

    def set_served(self, sta_ids) -> None:
        self.served_stas = sorted(sta_ids)
        for sta in self.served_stas:
            self._heads[sta] = self._new_packet(sta)
            self.last_served.setdefault(sta, -1)

    def _new_packet(self, dst: int) -> Packet:
        self._uid += 1
        return Packet(uid=(self.node_id << 32) | self._uid, dst=dst,
                      bits=self.engine.cfg.payload_bits)

    def downlink_head(self, dst: int) -> Packet | None:
        return self._heads.get(dst)

    # -- bidirectional traffic (AP contends like a STA) ---------------------

    def has_traffic(self) -> bool:
        return bool(self.served_stas) and self.engine.cfg.traffic == "bidirectional"

    def head_packet(self) -> Packet | None:
        if not self.has_traffic():
            return None
        if self._bidir_dst is None:
            self._bidir_dst = self.engine.traffic_rng.choice(self.served_stas)
        return self._heads[self._bidir_dst]

    def drop_head_packet(self, packet: Packet) -> None:
        self._heads[packet.dst] = self._new_packet(packet.dst)
        self._bidir_dst = None

    def packet_delivered(self, packet: Packet) -> None:
        self.last_served[packet.dst] = self.engine.now
        self._heads[packet.dst] = self._new_packet(packet.dst)
        if self._bidir_dst == packet.dst:
            self._bidir_dst = None

    # -- capability discovery ------------------------------------------------

    def on_assoc_request(self, frame: Frame, now: int) -> None:
        self.register_sta(frame.src, frame.capability.fd_capable)

    def _on_addressed(self, frame: Frame, trans, now: int) -> None:
        if frame.kind is FrameKind.ASSOC_REQUEST:
            self.on_assoc_request(frame, now)
            resp = Frame(FrameControl(FrameKind.ASSOC_RESPONSE), 0,
                         self.node_id, frame.src,
                         capability=self.engine.ap_capability())
            self.engine.schedule_tx(self, resp,
                                    trans.t_end + self.timing.sifs_us)
            return
        super()._on_addressed(frame, trans, now)

    # -- UFD receiver selection ------------------------------------------------

    def select_ufd_receiver(self, first_tx: int) -> int | None:
        """Least-recently-served eligible destination; ties on lowest id."""
        candidates = [sta for sta in self.served_stas
                      if sta != first_tx
                      and self._heads.get(sta) is not None
                      and self.neighborhood.eligible(first_tx, sta)]
        if not candidates:
            return None
        return min(candidates, key=lambda s: (self.last_served.get(s, -1), s))

    # -- responder decision tree -------------------------------------------------

    def respond_to_rts(self, frame: Frame, trans, now: int) -> None:
        if self.state is not NodeState.IDLE or self.transmitting is not None:
            return
        if self.nav_until > now:
            return
        initiator = frame.src
        t1 = trans.t_end
        d0 = frame.duration_us
        d1 = self.timing.cts_duration(d0)
        t4 = self.timing.first_tx_end(t1, d0)
        t5 = self.timing.ack_deadline(t4)
        t2 = t1 + self.timing.sifs_us + self.timing.t_cts

        plan = None
        kind = "HD"
        second_dst = None
        if self.engine.cfg.str_enabled and self.fd:
            policy = self.engine.cfg.policy
            bfd_plan = None
            if policy != POLICY_UFD_ONLY and self.registry.get(initiator):
                head = self._heads.get(initiator)
                if head is not None:
                    bfd_plan = self.timing.plan_second_tx_bfd(t2, t4, head.bits)
            ufd_plan = None
            ufd_dst = None
            if policy != POLICY_BFD_ONLY:
                ufd_dst = self.select_ufd_receiver(initiator)
                if ufd_dst is not None:
                    ufd_plan = self.timing.plan_second_tx_ufd(
                        t2, t4, self._heads[ufd_dst].bits)
            if policy in (POLICY_PREFER_BFD, POLICY_BFD_ONLY):
                choices = (("BFD", bfd_plan, initiator), ("UFD", ufd_plan, ufd_dst))
            else:
                choices = (("UFD", ufd_plan, ufd_dst), ("BFD", bfd_plan, initiator))
            for k, p, dst in choices:
                if p is not None:
                    kind, plan, second_dst = k, p, dst
                    break

        if plan is None:
            cts = Frame(FrameControl(FrameKind.CTS), d1, self.node_id, initiator)
        else:
            cts = make_cts_fd(initiator, d1, src=self.node_id)
        self.state = NodeState.RESPONDING
        self.exchange = {"initiator": initiator, "t4": t4, "t5": t5,
                         "kind": kind, "second_dst": second_dst}
        self.engine.schedule_tx(self, cts, t1 + self.timing.sifs_us)
        if plan is not None:
            packet = self._heads[second_dst]
            dur = max(t5 - plan.t_end, 0)
            data = Frame(FrameControl(FrameKind.DATA), dur, self.node_id,
                         second_dst, payload_bits=plan.payload_bits)
            self.pending_ack = PendingAck(packet, second_dst, t5, True)
            self.last_served[second_dst] = now
            self.engine.schedule_tx(self, data, plan.t_start,
                                    payload_rate=plan.mcs_rate_bps,
                                    exchange_leg="second", packet=packet,
                                    ufd_check=(kind == "UFD", initiator, t4))
        if (plan is not None and self.engine.cfg.mitigation == MITIGATION_FDTI):
            self.exchange["fdti_at"] = t5 + self.timing.sifs_us
        self.close_gen += 1
        self.engine.schedule_timer(self, TimerKind.EXCHANGE_CLOSE, t5,
                                   self.close_gen)

    def _exchange_close(self, now: int) -> None:
        if self.state is not NodeState.RESPONDING:
            return
        fdti_at = (self.exchange or {}).get("fdti_at")
        if fdti_at is not None:
            self.exchange = None
            self.engine.schedule_tx(self, make_fdti(self.node_id), fdti_at,
                                    fdti=True)
            # state clears when the FDTI transmission ends
            return
        self._finish_exchange(now)
