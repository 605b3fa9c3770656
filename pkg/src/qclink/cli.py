"""Command line entry point.

Subcommands:
  run        full simulation per a YAML config (or the bundled preset)
  sweep      repeat a run while varying one configuration value
  keyrate    asymptotic key rate for explicit link parameters
  threshold  null-key excess-noise threshold for explicit link parameters
"""

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .runner import (ConfigError, emit_outputs, load_config,
                     paper_15km_config, run_experiment, set_config_value)
from .security import SecurityError, SecurityParams, key_rate, null_key_threshold


def _add_common(parser):
    parser.add_argument("--config", help="YAML config file (default: bundled 15 km preset)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out-dir", help="directory for metrics and CSV output")
    parser.add_argument("--blocks", type=int, help="override the number of data blocks")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    parser.add_argument("--dump-iq", action="store_true",
                        help="write raw IQ captures under OUT_DIR/iq (needs --out-dir)")


def _load(args):
    cfg = load_config(args.config) if args.config else paper_15km_config()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.blocks is not None:
        cfg = replace(cfg, blocks=args.blocks)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    if args.dump_iq:
        cfg = replace(cfg, dump_iq=True)
    if cfg.dump_iq and not cfg.out_dir:
        raise ConfigError("--dump-iq requires --out-dir (or out_dir in the config)")
    return cfg


def _progress(quiet):
    if quiet:
        return None

    def show(rec):
        parts = [f"block {rec['block_id']:3d} {rec['mode']:<9s}"]
        if "ber" in rec:
            parts.append(f"ber={rec['ber']:.3g}")
        if "xi_hat_snu" in rec:
            parts.append(f"xi={rec['xi_hat_snu']:+.4f}")
        if "n0" in rec:
            parts.append(f"n0={rec['n0']:.4g}")
        if rec["flags"]:
            parts.append("flags=" + ",".join(str(f) for f in rec["flags"]))
        print("  ".join(parts), file=sys.stderr)

    return show


def cmd_run(args):
    cfg = _load(args)
    iq_dir = Path(cfg.out_dir) / "iq" if cfg.dump_iq else None
    log = run_experiment(cfg, progress=_progress(args.quiet), iq_dir=iq_dir)
    if cfg.out_dir:
        emit_outputs(log, cfg, cfg.out_dir)
    print(json.dumps(log.summary, indent=2, sort_keys=True, default=str))
    return 0


def cmd_sweep(args):
    cfg = _load(args)
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for value in values:
        sub = set_config_value(cfg, args.param, value)
        if not args.quiet:
            print(f"sweep {args.param} = {value}", file=sys.stderr)
        log = run_experiment(sub, progress=None)
        s = log.summary
        rows.append({
            "value": value,
            "mean_ber": s["mean_ber"],
            "mean_xi_snu": s["mean_xi_snu"],
            "mean_xi_leak_snu": s["mean_xi_leak_snu"],
            "mean_t_hat": s["mean_t_hat"],
            "key_rate_bps": (s["key_rate"] or {}).get("key_rate_bps"),
        })
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    print(json.dumps({"param": args.param, "rows": rows}, indent=2, default=str))
    return 0


def _security_params(args) -> SecurityParams:
    return SecurityParams(va_snu=args.va, transmittance=args.transmittance,
                          xi_snu=args.xi, eta=args.eta, v_el_snu=args.vel,
                          beta=args.beta, baud_hz=args.baud)


def _add_security_args(parser):
    parser.add_argument("--va", type=float, default=0.49, help="modulation variance, SNU")
    parser.add_argument("--transmittance", type=float, default=0.501187233627272,
                        help="channel transmittance T")
    parser.add_argument("--xi", type=float, default=0.009, help="excess noise at Bob, SNU")
    parser.add_argument("--eta", type=float, default=1.0, help="detector efficiency")
    parser.add_argument("--vel", type=float, default=0.05, help="electronic noise, SNU")
    parser.add_argument("--beta", type=float, default=0.95, help="reconciliation efficiency")
    parser.add_argument("--baud", type=float, default=250e6, help="quantum symbol rate, Hz")


def cmd_keyrate(args):
    report = key_rate(_security_params(args))
    print(json.dumps({
        "mutual_information_bits": report.mutual_information,
        "holevo_bound_bits": report.holevo_bound,
        "key_rate_per_symbol": report.key_rate_per_symbol,
        "key_rate_bps": report.key_rate_bps,
    }, indent=2))
    return 0


def cmd_threshold(args):
    xi_null = null_key_threshold(_security_params(args))
    print(json.dumps({"xi_null_snu": xi_null}, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qclink",
        description="Joint classical / CV-QKD coherent link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full simulation")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="vary one config value across runs")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="dotted config key, e.g. classical.amplitude")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_key = sub.add_parser("keyrate", help="key rate for explicit parameters")
    _add_security_args(p_key)
    p_key.set_defaults(func=cmd_keyrate)

    p_thr = sub.add_parser("threshold", help="null-key excess-noise threshold")
    _add_security_args(p_thr)
    p_thr.set_defaults(func=cmd_threshold)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SecurityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
