"""Experiment configuration: file format, defaults, and validation.

Config files are flat `key = value` text; `#` starts a comment, blank
lines are ignored, and list-valued keys take comma-separated entries.
Missing keys fall back to the defaults below, which follow the standard
evaluation parameter set (20 MHz channel, 1/54 Mbps control/data rates,
10 kbit payloads, 272/128 bit MAC/PHY headers, AP/STA densities
1.5e-4/3e-3 per m^2 over an 800x800 m^2 area, 40/30 dBm transmit powers).

The five sweep axes (SINR threshold, FD fraction, rho, FD efficiency,
STA carrier-sense range) plus the mitigation mode are list-valued; an
experiment runs their Cartesian product times the seed list.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from . import mac
from .channel import ChannelParams
from .engine import TRAFFIC_BIDIRECTIONAL, TRAFFIC_UPLINK, RunConfig
from .timing import TimingParams

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "parse_config_text",
           "preset_path", "PRESETS"]

PRESETS = ("fig4a", "fig4b", "fig4c", "fig4d")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # interframe spaces, rates, and sizes
    sifs_us: int = 10
    difs_us: int = 50
    slot_us: int = 20
    control_rate_bps: float = 1e6
    data_rate_bps: float = 54e6
    mcs_rates_bps: tuple = (54e6,)
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
    payload_bits: int = 10_000
    # deployment and channel
    area_m: tuple = (800.0, 800.0)
    lambda_ap: float = 1.5e-4
    lambda_sta: float = 3e-3
    tx_power_ap_dbm: float = 40.0
    tx_power_sta_dbm: float = 30.0
    path_loss_exponent: float = 3.5
    ref_loss_db: float = 46.7
    noise_dbm: float = -95.0
    tx_range_ap_m: float = 80.0
    tx_range_sta_m: float = 20.0
    cs_range_ap_m: float = 80.0
    rsi_delta_db: float = 38.0
    rsi_chi_db: float = 13.0
    fading: bool = True
    torus: bool = False
    # protocol switches
    str_enabled: bool = True
    ap_fd: bool = True
    policy: str = mac.POLICY_PREFER_BFD
    traffic: str = TRAFFIC_UPLINK
    rts_cts: bool = True
    probe_retries: int = 3
    sim_duration_us: int = 5_000_000
    # sweep axes (lists) and seeds
    sinr_threshold_db: tuple = (0.0,)
    fd_fraction: tuple = (1.0,)
    rho: tuple = (0.75,)
    eps: tuple = (1.0,)
    cs_range_sta_m: tuple = (40.0,)
    mitigation: tuple = (mac.MITIGATION_NONE,)
    seeds: tuple = tuple(range(20))

    def validate(self) -> None:
        problems = []
        for name in ("sinr_threshold_db", "fd_fraction", "rho", "eps",
                     "cs_range_sta_m", "mitigation", "seeds"):
            if not getattr(self, name):
                problems.append(f"{name}: sweep list must not be empty")
        for v in self.fd_fraction:
            if not 0.0 <= v <= 1.0:
                problems.append(f"fd_fraction: {v} outside [0, 1]")
        for v in self.eps:
            if not 0.0 <= v <= 1.0:
                problems.append(f"eps: {v} outside [0, 1]")
        for v in self.rho:
            if not 0.0 < v <= 1.0:
                problems.append(f"rho: {v} outside (0, 1]")
        for v in self.mitigation:
            if v not in mac.MITIGATIONS:
                problems.append(f"mitigation: unknown mode {v!r}")
        if self.policy not in mac.POLICIES:
            problems.append(f"policy: unknown value {self.policy!r}")
        if self.traffic not in (TRAFFIC_UPLINK, TRAFFIC_BIDIRECTIONAL):
            problems.append(f"traffic: unknown value {self.traffic!r}")
        if self.payload_bits < 0:
            problems.append("payload_bits: must be nonnegative")
        if self.sim_duration_us <= 0:
            problems.append("sim_duration_us: must be positive")
        if len(self.area_m) != 2 or min(self.area_m) <= 0:
            problems.append("area_m: needs two positive lengths")
        try:
            self.timing_params()
        except ValueError as exc:
            problems.append(f"timing: {exc}")
        if not problems:
            try:
                self.channel_params()
            except ValueError as exc:
                problems.append(f"channel: {exc}")
        if problems:
            raise ConfigError("; ".join(problems))

    def timing_params(self) -> TimingParams:
        return TimingParams(
            sifs_us=self.sifs_us, difs_us=self.difs_us, slot_us=self.slot_us,
            control_rate_bps=self.control_rate_bps,
            data_rate_bps=self.data_rate_bps,
            mac_header_bits=self.mac_header_bits,
            phy_header_bits=self.phy_header_bits,
            rts_bits=self.rts_bits, cts_bits=self.cts_bits,
            ack_bits=self.ack_bits, mgmt_bits=self.mgmt_bits,
            cw_min_slots=self.cw_min_slots, cw_max_slots=self.cw_max_slots,
            retry_limit=self.retry_limit, frag_step_bits=self.frag_step_bits,
            mcs_rates_bps=tuple(self.mcs_rates_bps))

    def channel_params(self, *, sinr_threshold_db=None, fd_fraction=None,
                       rho=None, cs_range_sta_m=None) -> ChannelParams:
        return ChannelParams(
            area_m=tuple(self.area_m), lambda_ap=self.lambda_ap,
            lambda_sta=self.lambda_sta,
            fd_fraction=self.fd_fraction[0] if fd_fraction is None else fd_fraction,
            tx_power_ap_dbm=self.tx_power_ap_dbm,
            tx_power_sta_dbm=self.tx_power_sta_dbm,
            path_loss_exponent=self.path_loss_exponent,
            ref_loss_db=self.ref_loss_db, noise_dbm=self.noise_dbm,
            sinr_threshold_db=(self.sinr_threshold_db[0]
                               if sinr_threshold_db is None else sinr_threshold_db),
            tx_range_ap_m=self.tx_range_ap_m, tx_range_sta_m=self.tx_range_sta_m,
            cs_range_sta_m=(self.cs_range_sta_m[0]
                            if cs_range_sta_m is None else cs_range_sta_m),
            cs_range_ap_m=self.cs_range_ap_m,
            rsi_delta_db=self.rsi_delta_db, rsi_chi_db=self.rsi_chi_db,
            rho=self.rho[0] if rho is None else rho, fading=self.fading,
            torus=self.torus)

    def run_config(self, *, sinr_threshold_db, fd_fraction, rho,
                   cs_range_sta_m, mitigation) -> RunConfig:
        """The STR arm for one sweep point."""
        return RunConfig(
            timing=self.timing_params(),
            channel=self.channel_params(
                sinr_threshold_db=sinr_threshold_db, fd_fraction=fd_fraction,
                rho=rho, cs_range_sta_m=cs_range_sta_m),
            payload_bits=self.payload_bits,
            str_enabled=self.str_enabled, ap_fd=self.ap_fd, policy=self.policy,
            mitigation=mitigation, traffic=self.traffic, rts_cts=self.rts_cts,
            probe_retries=self.probe_retries,
            sim_duration_us=self.sim_duration_us)

    @staticmethod
    def legacy_arm(run_cfg: RunConfig) -> RunConfig:
        """Paired legacy run: same everything, STR machinery off."""
        return replace(run_cfg, str_enabled=False,
                       mitigation=mac.MITIGATION_NONE)


# ----------------------------------------------------------------------
# file format

_LIST_FLOAT = ("sinr_threshold_db", "fd_fraction", "rho", "eps",
               "cs_range_sta_m", "mcs_rates_bps")
_LIST_INT = ("seeds",)
_LIST_STR = ("mitigation",)
_PAIR = ("area_m",)
_BOOL = ("fading", "torus", "str_enabled", "ap_fd", "rts_cts")
_STR = ("policy", "traffic")
_INT = ("sifs_us", "difs_us", "slot_us", "mac_header_bits", "phy_header_bits",
        "rts_bits", "cts_bits", "ack_bits", "mgmt_bits", "cw_min_slots",
        "cw_max_slots", "retry_limit", "frag_step_bits", "payload_bits",
        "probe_retries", "sim_duration_us")

_FIELDS = {f.name for f in fields(ExperimentConfig)}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(key: str, text: str):
    items = [t.strip() for t in text.split(",") if t.strip() != ""]
    if key in _PAIR:
        if len(items) != 2:
            raise ValueError("expected two comma-separated lengths")
        return (float(items[0]), float(items[1]))
    if key in _LIST_FLOAT:
        return tuple(float(t) for t in items)
    if key in _LIST_INT:
        return tuple(int(t) for t in items)
    if key in _LIST_STR:
        return tuple(items)
    if key in _BOOL:
        return _parse_bool(text)
    if key in _STR:
        return text
    if key in _INT:
        return int(text)
    return float(text)


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, rhs)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    cfg = ExperimentConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), source=str(path))


def preset_path(name: str):
    from importlib.resources import files
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return files("fdwlan.presets").joinpath(f"{name}.cfg")


def resolved_lines(cfg: ExperimentConfig):
    """The full effective configuration, one `key = value` line per field."""
    out = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            out.append(f"{f.name} = {', '.join(str(x) for x in v)}")
        else:
            out.append(f"{f.name} = {v}")
    return out
