"""Run accumulators and the three headline quantities.

Throughput is MAC payload bits whose handshake completed (data decoded and
the matching ACK received by the sender) per unit time, network-wide.
Goodput discounts the payload received by nodes that were transmitting
while receiving, through the FD efficiency factor eps; the contention
unfairness index is a Jain-style index over per-STA mean interframe waits
normalized by EIFS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["ExchangeRecord", "MetricsAccumulator", "str_gain", "goodput", "cui",
           "jain_index"]

EXCHANGE_HD = "HD"
EXCHANGE_BFD = "BFD"
EXCHANGE_UFD = "UFD"


@dataclass
class ExchangeRecord:
    """Outcome of one handshake: payload bits delivered on each leg.

    `first_bits` is the payload of the transmission that won contention
    (zero when it was not delivered); `second_bits` is the concurrent
    second transmission of a BFD/UFD exchange.
    """

    kind: str
    first_bits: int = 0
    second_bits: int = 0


@dataclass
class MetricsAccumulator:
    sim_duration_us: int = 0
    delivered_bits: dict = field(default_factory=dict)     # node id -> bits
    exchanges: list = field(default_factory=list)          # ExchangeRecord
    wait_sum_us: dict = field(default_factory=dict)        # sta id -> total wait
    wait_count: dict = field(default_factory=dict)         # sta id -> samples
    eifs_wait_count: dict = field(default_factory=dict)    # sta id -> EIFS waits
    retransmissions: int = 0
    dropped_packets: int = 0

    def record_delivery(self, src: int, bits: int) -> None:
        self.delivered_bits[src] = self.delivered_bits.get(src, 0) + bits

    def record_wait(self, sta: int, wait_us: int, corrupted: bool) -> None:
        self.wait_sum_us[sta] = self.wait_sum_us.get(sta, 0) + wait_us
        self.wait_count[sta] = self.wait_count.get(sta, 0) + 1
        if corrupted:
            self.eifs_wait_count[sta] = self.eifs_wait_count.get(sta, 0) + 1

    def record_exchange(self, record: ExchangeRecord) -> None:
        self.exchanges.append(record)

    def exchange_counts(self) -> dict:
        counts = {EXCHANGE_HD: 0, EXCHANGE_BFD: 0, EXCHANGE_UFD: 0}
        for rec in self.exchanges:
            counts[rec.kind] += 1
        return counts

    @property
    def total_delivered_bits(self) -> int:
        return sum(self.delivered_bits.values())

    def throughput_bps(self) -> float:
        if self.sim_duration_us <= 0:
            return 0.0
        return self.total_delivered_bits * 1e6 / self.sim_duration_us

    def mean_waits_us(self) -> dict:
        return {sta: self.wait_sum_us[sta] / self.wait_count[sta]
                for sta in sorted(self.wait_count) if self.wait_count[sta] > 0}


def str_gain(t_str_bps: float, t_legacy_bps: float) -> float | None:
    """Throughput gain of STR over legacy under a paired-run design.

    Returns None when the legacy arm delivered nothing (undefined point).
    """
    if t_legacy_bps <= 0.0:
        return None
    return t_str_bps / t_legacy_bps


def goodput(acc: MetricsAccumulator, eps: float) -> float:
    """Effective payload bits per second under FD efficiency eps.

    Per exchange, the effective payload is eps*(first+second) for BFD,
    eps*first + second for UFD (the first leg lands on the transmitting
    AP), and the plain delivered payload for HD exchanges.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if acc.sim_duration_us <= 0:
        return 0.0
    effective = 0.0
    for rec in acc.exchanges:
        if rec.kind == EXCHANGE_BFD:
            effective += eps * (rec.first_bits + rec.second_bits)
        elif rec.kind == EXCHANGE_UFD:
            effective += eps * rec.first_bits + rec.second_bits
        else:
            effective += rec.first_bits
    return effective * 1e6 / acc.sim_duration_us


def jain_index(values) -> float:
    vals = list(values)
    n = len(vals)
    if n == 0:
        return 1.0
    total = sum(vals)
    squares = sum(v * v for v in vals)
    if squares == 0.0:
        return 1.0  # all-zero samples: perfect equality
    return (total * total) / (n * squares)


def cui(mean_waits_us: dict, eifs_us: int) -> float:
    """Contention unfairness index over f_i = w_i / EIFS."""
    if eifs_us <= 0:
        raise ValueError("eifs_us must be positive")
    fractions = [w / eifs_us for _, w in sorted(mean_waits_us.items())]
    return jain_index(fractions)
