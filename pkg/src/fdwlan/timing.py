"""Transmission-time and interframe-space arithmetic.

All times are integer microseconds; every division rounds up so a schedule
is never optimistic about when a frame ends.  Control frames (RTS, CTS,
ACK, FDTI) are sent whole at the control rate; a data frame is a PHY
header at the control rate followed by MAC header plus payload at the
selected data rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .frames import FrameKind

__all__ = ["TimingParams", "TxSchedule", "InvalidDurationError"]


class InvalidDurationError(ValueError):
    pass


@dataclass(frozen=True)
class TxSchedule:
    """Planned second transmission of a full-duplex exchange."""

    t_start: int
    t_end: int
    payload_bits: int
    mcs_rate_bps: float


@dataclass(frozen=True)
class TimingParams:
    sifs_us: int = 10
    difs_us: int = 50
    slot_us: int = 20
    control_rate_bps: float = 1e6
    data_rate_bps: float = 54e6
    mac_header_bits: int = 272
    phy_header_bits: int = 128
    rts_bits: int = 288
    cts_bits: int = 240
    ack_bits: int = 240
    mgmt_bits: int = 288
    cw_min_slots: int = 32
    cw_max_slots: int = 1024
    retry_limit: int = 7
    frag_step_bits: int = 100
    # Data rates the second-transmission planner may pick from; fastest wins.
    mcs_rates_bps: tuple = ()

    def __post_init__(self):
        if self.sifs_us >= self.difs_us:
            raise InvalidDurationError("SIFS must be shorter than DIFS")
        if self.difs_us >= self.eifs_us:
            raise InvalidDurationError("DIFS must be shorter than EIFS")
        for name in ("control_rate_bps", "data_rate_bps"):
            if getattr(self, name) <= 0:
                raise InvalidDurationError(f"{name} must be positive")
        if self.cw_min_slots > self.cw_max_slots:
            raise InvalidDurationError("cw_min_slots must not exceed cw_max_slots")
        for name in ("cw_min_slots", "cw_max_slots"):
            v = getattr(self, name)
            if v < 1 or v & (v - 1):
                raise InvalidDurationError(f"{name} must be a power of two")
        if not self.mcs_rates_bps:
            object.__setattr__(self, "mcs_rates_bps", (self.data_rate_bps,))

    # ------------------------------------------------------------------
    # frame airtimes

    def _ceil_us(self, bits: float, rate_bps: float) -> int:
        return math.ceil(bits * 1e6 / rate_bps)

    def tx_time(self, kind: FrameKind, payload_bits: int = 0,
                data_rate_bps: float | None = None, *, fdti: bool = False) -> int:
        """Airtime of one frame in microseconds."""
        if fdti:
            # The FD transmission indicator is a minimal, ACK-sized frame.
            return self._ceil_us(self.ack_bits, self.control_rate_bps)
        if kind is FrameKind.RTS:
            return self._ceil_us(self.rts_bits, self.control_rate_bps)
        if kind is FrameKind.CTS:
            return self._ceil_us(self.cts_bits, self.control_rate_bps)
        if kind is FrameKind.ACK:
            return self._ceil_us(self.ack_bits, self.control_rate_bps)
        if kind is FrameKind.DATA:
            rate = data_rate_bps if data_rate_bps else self.data_rate_bps
            return (self._ceil_us(self.phy_header_bits, self.control_rate_bps)
                    + self._ceil_us(self.mac_header_bits + payload_bits, rate))
        # management frames: beacon / association
        return self._ceil_us(self.mgmt_bits, self.control_rate_bps)

    @property
    def t_rts(self) -> int:
        return self.tx_time(FrameKind.RTS)

    @property
    def t_cts(self) -> int:
        return self.tx_time(FrameKind.CTS)

    @property
    def t_ack(self) -> int:
        return self.tx_time(FrameKind.ACK)

    @property
    def t_fdti(self) -> int:
        return self.tx_time(FrameKind.DATA, fdti=True)

    # ------------------------------------------------------------------
    # exchange durations

    def rts_duration(self, payload_bits: int,
                     data_rate_bps: float | None = None) -> int:
        """Duration field of an RTS: D0 = 3*SIFS + T_CTS + T_Data + T_ACK."""
        return (3 * self.sifs_us + self.t_cts
                + self.tx_time(FrameKind.DATA, payload_bits, data_rate_bps)
                + self.t_ack)

    def cts_duration(self, d0: int) -> int:
        """Duration field of the CTS/CTS-FD: D1 = D0 - (T_CTS + SIFS)."""
        d1 = d0 - (self.t_cts + self.sifs_us)
        if d1 < 0:
            raise InvalidDurationError(
                f"D0={d0} is shorter than T_CTS + SIFS = {self.t_cts + self.sifs_us}"
            )
        return d1

    def first_tx_end(self, t1: int, d0: int) -> int:
        """End of the first data transmission: t4 = t1 + D0 - (SIFS + T_ACK)."""
        return t1 + d0 - (self.sifs_us + self.t_ack)

    def ack_deadline(self, t4: int) -> int:
        """Adjusted ACK timeout for FD exchanges: t5 = t4 + SIFS + T_ACK."""
        return t4 + self.sifs_us + self.t_ack

    @property
    def eifs_us(self) -> int:
        """EIFS = SIFS + ACK-at-control-rate + DIFS (standard definition)."""
        return self.sifs_us + self.t_ack + self.difs_us

    @property
    def ack_timeout_legacy_us(self) -> int:
        """Legacy ACK timeout, counted from the end of the data frame."""
        return self.sifs_us + self.t_ack + self.slot_us

    @property
    def cts_timeout_us(self) -> int:
        """CTS timeout, counted from the end of the RTS frame."""
        return self.sifs_us + self.t_cts + self.slot_us

    # ------------------------------------------------------------------
    # second-transmission planners

    def _payload_candidates(self, head_bits: int):
        step = self.frag_step_bits
        bits = head_bits
        while bits >= step:
            yield bits
            bits -= step

    def plan_second_tx_bfd(self, t2: int, t4: int, queue_head_bits: int,
                           mcs_options=None) -> TxSchedule | None:
        """Plan the responder's concurrent transmission of a BFD exchange.

        Starts SIFS after the CTS-FD ends and must finish no later than t4.
        Picks the largest payload prefix (fragmenting in frag_step_bits
        steps) and the fastest data rate that fits.  Returns None when even
        the smallest fragment does not fit, which downgrades the exchange.
        """
        rates = sorted(mcs_options or self.mcs_rates_bps, reverse=True)
        t_start = t2 + self.sifs_us
        if t_start > t4:
            return None
        for payload in self._payload_candidates(queue_head_bits):
            for rate in rates:
                dur = self.tx_time(FrameKind.DATA, payload, rate)
                if t_start + dur <= t4:
                    return TxSchedule(t_start, t_start + dur, payload, rate)
        return None

    def plan_second_tx_ufd(self, t2: int, t4: int, queue_head_bits: int,
                           mcs_options=None) -> TxSchedule | None:
        """Plan the second transmission of a UFD exchange.

        The receiver may be half-duplex and will ACK a SIFS after the data
        ends, so the transmission must end exactly at t4: when its airtime
        t_est is shorter than the window the start is delayed to t4 - t_est.
        """
        rates = sorted(mcs_options or self.mcs_rates_bps, reverse=True)
        window = t4 - (t2 + self.sifs_us)
        if window <= 0:
            return None
        for payload in self._payload_candidates(queue_head_bits):
            for rate in rates:
                t_est = self.tx_time(FrameKind.DATA, payload, rate)
                if 0 < t_est <= window:
                    return TxSchedule(t4 - t_est, t4, payload, rate)
        return None
