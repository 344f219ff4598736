"""Spatial deployment, propagation, and reception models.

Two reception models run side by side, as is usual for this kind of
system-level study: a protocol model in which carrier sensing and frame
decodability are range-gated, and a physical model in which a reception
succeeds only when its SINR clears the configured threshold.  The residual
self-interference of a full-duplex node enters the SINR denominator
whenever the node receives while transmitting.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ChannelParams",
    "Node",
    "Deployment",
    "ChannelModel",
    "generate_deployment",
    "associate",
    "rx_power_dbm",
    "rsi_power_dbm",
    "dbm_to_mw",
    "mw_to_dbm",
    "dump_deployment_csv",
    "load_deployment_csv",
]

log = logging.getLogger(__name__)

RX_POWER_FLOOR_DBM = -400.0  # stand-in for -inf when a fading draw is zero


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return RX_POWER_FLOOR_DBM
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ChannelParams:
    area_m: tuple = (800.0, 800.0)
    lambda_ap: float = 1.5e-4
    lambda_sta: float = 3e-3
    fd_fraction: float = 1.0            # lambda_f / lambda_u
    tx_power_ap_dbm: float = 40.0
    tx_power_sta_dbm: float = 30.0
    path_loss_exponent: float = 3.5
    ref_loss_db: float = 46.7           # loss at 1 m
    noise_dbm: float = -95.0
    sinr_threshold_db: float = 0.0
    tx_range_ap_m: float = 80.0
    tx_range_sta_m: float = 20.0
    cs_range_sta_m: float = 40.0
    cs_range_ap_m: float = 80.0
    rsi_delta_db: float = 38.0
    rsi_chi_db: float = 13.0
    rho: float = 0.75
    fading: bool = True
    # periodic boundary: removes border artifacts on reduced-area deployments
    torus: bool = False

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 <= self.fd_fraction <= 1.0:
            raise ValueError(f"fd_fraction must lie in [0, 1], got {self.fd_fraction}")
        for name in ("tx_range_ap_m", "tx_range_sta_m", "cs_range_sta_m", "cs_range_ap_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_ap < 0 or self.lambda_sta < 0:
            raise ValueError("densities must be nonnegative")
        if not math.isfinite(self.sinr_threshold_db):
            raise ValueError("sinr_threshold_db must be finite")


@dataclass(frozen=True)
class Node:
    node_id: int
    is_ap: bool
    x: float
    y: float
    fd_capable: bool


@dataclass
class Deployment:
    """Immutable-after-generation node layout and association map."""

    aps: list
    stas: list
    association: dict = field(default_factory=dict)  # sta id -> ap id

    @property
    def nodes(self):
        return self.aps + self.stas

    def node_by_id(self, node_id: int) -> Node:
        return self._index[node_id]

    def finalize(self):
        self._index = {n.node_id: n for n in self.nodes}
        return self


def node_distance(params: ChannelParams, a: Node, b: Node) -> float:
    dx = abs(a.x - b.x)
    dy = abs(a.y - b.y)
    if params.torus:
        dx = min(dx, params.area_m[0] - dx)
        dy = min(dy, params.area_m[1] - dy)
    return math.hypot(dx, dy)


def path_loss_db(params: ChannelParams, distance_m: float) -> float:
    d = max(distance_m, 1.0)  # clamp coincident / sub-reference distances
    return params.ref_loss_db + 10.0 * params.path_loss_exponent * math.log10(d)


def rx_power_dbm(params: ChannelParams, tx_power_dbm: float, distance_m: float,
                 fading_draw: float = 1.0) -> float:
    """Received power over large-scale path loss and one Rayleigh draw."""
    if fading_draw <= 0.0:
        return RX_POWER_FLOOR_DBM
    return (tx_power_dbm - path_loss_db(params, distance_m)
            + 10.0 * math.log10(fading_draw))


def rsi_power_dbm(params: ChannelParams, p_tx_dbm: float, rho: float | None = None) -> float:
    """Residual self-interference power at a full-duplex node.

    Cancellation is referenced to the receiver noise floor: a node with
    capability rho=1 suppresses its own signal down to the noise floor,
    and a capability shortfall leaves the residual

        (delta + chi) * (1 - rho) / rho   dB above the noise floor,

    so rho=0.75 sits 17 dB and rho=0.6 already 34 dB above noise.  The
    transmit power argument only matters as an upper bound: the residual
    can never exceed the transmitted power.
    """
    r = params.rho if rho is None else rho
    if not 0.0 < r <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {r}")
    residual = params.noise_dbm + (
        params.rsi_delta_db + params.rsi_chi_db) * (1.0 - r) / r
    return min(residual, p_tx_dbm)


def generate_deployment(params: ChannelParams, seed: int) -> Deployment:
    """Draw a Poisson deployment and associate every STA to an AP.

    Node counts are Poisson(density * area), positions uniform over the
    area, and FD capability i.i.d. Bernoulli(fd_fraction).  Deterministic
    given (params, seed); a draw with zero APs is resampled.
    """
    area = params.area_m[0] * params.area_m[1]
    rng = np.random.default_rng([seed, 0xD3F0])
    n_ap = int(rng.poisson(params.lambda_ap * area))
    attempts = 0
    while n_ap == 0:
        attempts += 1
        log.info("deployment seed %d drew zero APs, resampling (attempt %d)",
                 seed, attempts)
        n_ap = int(rng.poisson(params.lambda_ap * area))
    n_sta = int(rng.poisson(params.lambda_sta * area))
    ap_xy = rng.uniform([0, 0], params.area_m, size=(n_ap, 2))
    sta_xy = rng.uniform([0, 0], params.area_m, size=(n_sta, 2)) if n_sta else np.empty((0, 2))
    sta_fd = rng.random(n_sta) < params.fd_fraction if n_sta else np.empty(0, bool)
    aps = [Node(i, True, float(ap_xy[i, 0]), float(ap_xy[i, 1]), True)
           for i in range(n_ap)]
    stas = [Node(n_ap + j, False, float(sta_xy[j, 0]), float(sta_xy[j, 1]), bool(sta_fd[j]))
            for j in range(n_sta)]
    dep = Deployment(aps, stas).finalize()
    dep.association = associate(dep, params)
    return dep


def associate(deployment: Deployment, params: ChannelParams) -> dict:
    """Map every STA to the AP with the highest mean received power.

    Fading is excluded: association uses the distance-driven mean, so with
    equal AP powers this is nearest-AP association.  Ties break on the
    lower AP id.
    """
    if not deployment.aps:
        raise ValueError("association requires at least one AP")
    assoc = {}
    for sta in deployment.stas:
        best = None
        best_power = -math.inf
        for ap in deployment.aps:
            d = node_distance(params, ap, sta)
            p = params.tx_power_ap_dbm - path_loss_db(params, d)
            if p > best_power:
                best_power = p
                best = ap.node_id
        assoc[sta.node_id] = best
    return assoc


class ChannelModel:
    """Precomputed pairwise geometry and power tables for one deployment."""

    def __init__(self, params: ChannelParams, deployment: Deployment):
        self.params = params
        self.deployment = deployment
        nodes = deployment.nodes
        self.node_ids = [n.node_id for n in nodes]
        xy = np.array([[n.x, n.y] for n in nodes]) if nodes else np.empty((0, 2))
        diff = np.abs(xy[:, None, :] - xy[None, :, :])
        if params.torus:
            span = np.array(params.area_m)
            diff = np.minimum(diff, span - diff)
        self.dist = np.hypot(diff[..., 0], diff[..., 1])
        tx_dbm = np.array([params.tx_power_ap_dbm if n.is_ap else params.tx_power_sta_dbm
                           for n in nodes])
        loss = params.ref_loss_db + 10.0 * params.path_loss_exponent * np.log10(
            np.maximum(self.dist, 1.0))
        self.mean_rx_mw = 10.0 ** ((tx_dbm[:, None] - loss) / 10.0)
        np.fill_diagonal(self.mean_rx_mw, 0.0)
        self.noise_mw = dbm_to_mw(params.noise_dbm)
        self.threshold = 10.0 ** (params.sinr_threshold_db / 10.0)
        self._id_to_idx = {nid: i for i, nid in enumerate(self.node_ids)}
        self._is_ap = np.array([n.is_ap for n in nodes])
        self.rsi_mw = {
            n.node_id: dbm_to_mw(rsi_power_dbm(
                params, tx_dbm[self._id_to_idx[n.node_id]]))
            for n in nodes
        }

    def idx(self, node_id: int) -> int:
        return self._id_to_idx[node_id]

    def distance(self, a: int, b: int) -> float:
        return float(self.dist[self.idx(a), self.idx(b)])

    def mean_power_mw(self, tx: int, rx: int) -> float:
        return float(self.mean_rx_mw[self.idx(tx), self.idx(rx)])

    def cs_range_of(self, node: Node) -> float:
        return self.params.cs_range_ap_m if node.is_ap else self.params.cs_range_sta_m

    def decode_range_of(self, tx: Node) -> float:
        return self.params.tx_range_ap_m if tx.is_ap else self.params.tx_range_sta_m

    def senses(self, listener: int, transmitter: int) -> bool:
        """Protocol model: the listener's medium is busy when any active
        transmitter lies within the listener's carrier-sensing range
        (boundary inclusive)."""
        node = self.deployment.node_by_id(listener)
        return self.distance(transmitter, listener) <= self.cs_range_of(node)

    def carrier_sensed_busy(self, node_id: int, active_transmitters) -> bool:
        return any(self.senses(node_id, tx) for tx in active_transmitters if tx != node_id)

    def in_decode_range(self, tx: int, rx: int) -> bool:
        """Protocol model gate for decoding: a frame is decodable only
        within the transmission range of the transmitter's node class."""
        tx_node = self.deployment.node_by_id(tx)
        return self.distance(tx, rx) <= self.decode_range_of(tx_node)

    def interference_neighbors(self, sta_id: int) -> set:
        """STAs within cs_range_sta of the given STA (boundary inclusive)."""
        out = set()
        for other in self.deployment.stas:
            if other.node_id == sta_id:
                continue
            if self.distance(sta_id, other.node_id) <= self.params.cs_range_sta_m:
                out.add(other.node_id)
        return out

    def reception_succeeds(self, rx: int, intended_tx: int, signal_mw: float,
                           interference_mw: float, self_tx_active: bool) -> bool:
        """Physical model: SINR against the threshold, boundary inclusive."""
        denom = self.noise_mw + interference_mw
        if self_tx_active:
            denom += self.rsi_mw[rx]
        return signal_mw >= self.threshold * denom


# ----------------------------------------------------------------------
# deployment persistence

_CSV_FIELDS = ["id", "kind", "x", "y", "fd_capable", "associated_ap"]


def dump_deployment_csv(deployment: Deployment, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_FIELDS)
        for n in deployment.nodes:
            assoc = "" if n.is_ap else deployment.association.get(n.node_id, "")
            w.writerow([n.node_id, "ap" if n.is_ap else "sta",
                        f"{n.x:.6f}", f"{n.y:.6f}", int(n.fd_capable), assoc])


def load_deployment_csv(path) -> Deployment:
    aps, stas, assoc = [], [], {}
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            node = Node(int(row["id"]), row["kind"] == "ap",
                        float(row["x"]), float(row["y"]), bool(int(row["fd_capable"])))
            if node.is_ap:
                aps.append(node)
            else:
                stas.append(node)
                if row["associated_ap"] != "":
                    assoc[node.node_id] = int(row["associated_ap"])
    dep = Deployment(aps, stas, assoc)
    return dep.finalize()
