"""Experiment driver: sweeps, paired runs, and CSV emission.

Every sweep point (SINR threshold x FD fraction x rho x CS range x
mitigation) runs as a pair: the STR arm and a legacy arm with the same
seed, so the STR gain is a paired ratio.  The FD-efficiency axis does not
change protocol dynamics (it reweights delivered payload), so its rows
are derived from the same pair of runs.

Rows are emitted in deterministic sweep order regardless of how many
worker processes execute the runs; re-running the same config reproduces
the CSV byte for byte except the timestamp header line.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from itertools import product

from . import __version__
from .config import (ConfigError, ExperimentConfig, load_config, preset_path,
                     resolved_lines)
from .engine import run
from .metrics import goodput, str_gain, cui

CSV_COLUMNS = [
    "sinr_threshold_db", "fd_fraction", "rho", "cs_range_sta_m", "mitigation",
    "eps", "seed", "aps", "stas", "served_stas",
    "throughput_str_bps", "throughput_legacy_bps", "str_gain",
    "goodput_str_bps", "goodput_legacy_bps", "goodput_gain", "cui",
    "hd_exchanges", "bfd_exchanges", "ufd_exchanges",
    "retransmissions_str", "retransmissions_legacy",
    "drops_str", "drops_legacy",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _run_point(args):
    """One paired (sweep point, seed) execution; runs in a worker process."""
    index, exp, point, seed = args
    threshold, fd, rho, cs, mitigation = point
    str_cfg = exp.run_config(sinr_threshold_db=threshold, fd_fraction=fd,
                             rho=rho, cs_range_sta_m=cs, mitigation=mitigation)
    leg_cfg = ExperimentConfig.legacy_arm(str_cfg)
    res_str = run(str_cfg, seed)
    res_leg = run(leg_cfg, seed, deployment=res_str.deployment)
    m_str, m_leg = res_str.metrics, res_leg.metrics
    eifs = str_cfg.timing.eifs_us
    t_str = m_str.throughput_bps()
    t_leg = m_leg.throughput_bps()
    rows = []
    for eps in exp.eps:
        g_str = goodput(m_str, eps)
        g_leg = goodput(m_leg, 1.0)
        counts = m_str.exchange_counts()
        rows.append({
            "sinr_threshold_db": threshold, "fd_fraction": fd, "rho": rho,
            "cs_range_sta_m": cs, "mitigation": mitigation, "eps": eps,
            "seed": seed,
            "aps": len(res_str.deployment.aps),
            "stas": len(res_str.deployment.stas),
            "served_stas": len(res_str.served_stas),
            "throughput_str_bps": t_str, "throughput_legacy_bps": t_leg,
            "str_gain": str_gain(t_str, t_leg),
            "goodput_str_bps": g_str, "goodput_legacy_bps": g_leg,
            "goodput_gain": (g_str / g_leg) if g_leg > 0 else None,
            "cui": cui(m_str.mean_waits_us(), eifs),
            "hd_exchanges": counts["HD"], "bfd_exchanges": counts["BFD"],
            "ufd_exchanges": counts["UFD"],
            "retransmissions_str": m_str.retransmissions,
            "retransmissions_legacy": m_leg.retransmissions,
            "drops_str": m_str.dropped_packets,
            "drops_legacy": m_leg.dropped_packets,
        })
    return index, rows


def run_experiment(exp: ExperimentConfig, out_path, *, jobs: int = 1,
                   trace_path=None, stamp: bool = True) -> int:
    """Execute the full sweep and write the CSV. Returns the row count."""
    exp.validate()
    points = list(product(exp.sinr_threshold_db, exp.fd_fraction, exp.rho,
                          exp.cs_range_sta_m, exp.mitigation))
    work = [(i, exp, point, seed)
            for i, (point, seed) in enumerate(product(points, exp.seeds))]
    if trace_path is not None and work:
        _, _, point, seed = work[0]
        threshold, fd, rho, cs, mitigation = point
        traced = run(exp.run_config(sinr_threshold_db=threshold, fd_fraction=fd,
                                    rho=rho, cs_range_sta_m=cs,
                                    mitigation=mitigation),
                     seed, collect_trace=True)
        with open(trace_path, "w") as fh:
            fh.write("\n".join(traced.trace) + "\n")
    n_rows = 0
    with open(out_path, "w", newline="") as fh:
        fh.write(f"# fdwlan {__version__} results\n")
        if stamp:
            fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        for line in resolved_lines(exp):
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_point, work, chunksize=1))
        else:
            results = [_run_point(item) for item in work]
        results.sort(key=lambda r: r[0])
        for _, rows in results:
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
                n_rows += 1
        fh.write("# complete\n")
    return n_rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fdwlan",
        description="802.11 DCF + full-duplex STR MAC simulator")
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment config file")
    src.add_argument("--preset", help="bundled experiment preset "
                                      "(fig4a, fig4b, fig4c, fig4d)")
    parser.add_argument("--out", default="results.csv", help="output CSV path")
    parser.add_argument("--seeds", type=int, default=None,
                        help="override: use seeds 0..N-1")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for the sweep")
    parser.add_argument("--trace", default=None,
                        help="write the first STR run's event trace here")
    args = parser.parse_args(argv)
    try:
        if args.preset:
            exp = load_config(preset_path(args.preset))
        else:
            exp = load_config(args.config)
        if args.seeds is not None:
            from dataclasses import replace
            exp = replace(exp, seeds=tuple(range(args.seeds)))
            exp.validate()
    except (ConfigError, OSError) as exc:
        print(f"fdwlan: {exc}", file=sys.stderr)
        return 2
    try:
        n = run_experiment(exp, args.out, jobs=args.jobs, trace_path=args.trace)
    except Exception as exc:  # noqa: BLE001 - surface any run failure
        print(f"fdwlan: run failed: {exc}", file=sys.stderr)
        return 1
    print(f"fdwlan: wrote {n} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
