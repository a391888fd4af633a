"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .harness import (METRICS, ConfigError, EvalConfig, FeederData, run_rolling_evaluation,
                      temperature_mode_sweep)
from .ingest import (DataError, SynthConfig, generate_synthetic_feeder, parse_load_csv,
                     parse_temperature_csv, read_report_csv, synthetic_temperature,
                     write_load_csv, write_temperature_csv)

ACTUAL_TEMP_FILE = "temperature_actual.csv"
FORECAST_TEMP_FILE = "temperature_forecast.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser():
    p = _Parser(prog="lvforecast", description="Probabilistic feeder load forecasting")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("synth", help="write synthetic feeders and temperatures")
    s.add_argument("--feeders", type=int, required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--customers", type=int, default=50)
    s.add_argument("--temp-sensitivity", type=float, default=0.0)
    s.add_argument("--osh-fraction", type=float, default=0.0)
    s.add_argument("--annual-amplitude", type=float, default=0.25)
    e = sub.add_parser("evaluate", help="rolling-origin evaluation")
    e.add_argument("--config", required=True)
    r = sub.add_parser("report", help="summarise a report CSV")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--by", choices=("horizon", "day", "feeder"), default="day")
    r.add_argument("--metric", choices=METRICS, default="MAPE")
    w = sub.add_parser("sweep-temp", help="compare temperature modes")
    w.add_argument("--config", required=True)
    return p


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    temps = synthetic_temperature(args.days, args.seed)
    for i in range(1, args.feeders + 1):
        cfg = SynthConfig(n_customers=args.customers, days=args.days, seed=args.seed,
                          temp_sensitivity=args.temp_sensitivity, osh_fraction=args.osh_fraction,
                          annual_amplitude=args.annual_amplitude, feeder_id=f"feeder_{i:03d}")
        series, _ = generate_synthetic_feeder(cfg, temps)
        write_load_csv(series, out / f"{cfg.feeder_id}.csv")
    write_temperature_csv(temps, out / ACTUAL_TEMP_FILE, out / FORECAST_TEMP_FILE)
    print(f"wrote {args.feeders} feeders to {out}")
    return 0


def load_directory(data_dir):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} not found")
    temps = None
    if (data_dir / ACTUAL_TEMP_FILE).exists():
        temps = parse_temperature_csv(data_dir / ACTUAL_TEMP_FILE, data_dir / FORECAST_TEMP_FILE)
    feeders = [FeederData(parse_load_csv(p), temps) for p in sorted(data_dir.glob("*.csv"))
               if not p.name.startswith("temperature_")]
    if not feeders:
        raise DataError(f"no load files in {data_dir}")
    return feeders


def _load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cfg = EvalConfig.from_file(path)
    if cfg.data_dir is None:
        raise ConfigError("config needs data_dir")
    return cfg


def cmd_evaluate(args):
    cfg = _load_config(args.config)
    data = load_directory(cfg.data_dir)
    report = run_rolling_evaluation(data, cfg)
    for f, m, msg in report.failures:
        print(f"failed: {f} {m}: {msg}", file=sys.stderr)
    print(f"wrote {len(report.rows)} report rows to {cfg.output_dir}")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args.config)
    data = load_directory(cfg.data_dir)
    sweep = temperature_mode_sweep(data, cfg)
    sweep.write(cfg.output_dir)
    print(f"wrote sweep.csv and ks.csv to {cfg.output_dir}")
    return 0


def cmd_report(args):
    path = Path(args.input)
    if path.is_dir():
        path = path / "report.csv"
    rows = [r for r in read_report_csv(path) if r[2] == args.metric]
    if args.by == "feeder":
        cols = sorted({r[1] for r in rows})
        table = defaultdict(dict)
        for f, m, _, slc, v in rows:
            if slc == "all":
                table[f][m] = v
        keys = sorted(table)
    else:
        prefix = "day" if args.by == "day" else "hour"
        n = 4 if args.by == "day" else 96
        cols = [f"{prefix}{k}" for k in range(1, n + 1)]
        acc = defaultdict(lambda: defaultdict(list))
        for f, m, _, slc, v in rows:
            if slc.startswith(prefix):
                acc[m][slc].append(v)
        table = {m: {c: float(np.mean(v)) for c, v in d.items()} for m, d in acc.items()}
        keys = sorted(table)
    print(",".join(["feeder" if args.by == "feeder" else "method"] + cols))
    for k in keys:
        print(",".join([k] + [f"{table[k][c]:.4f}" if c in table[k] else "" for c in cols]))
    return 0


COMMANDS = {"synth": cmd_synth, "evaluate": cmd_evaluate, "report": cmd_report,
            "sweep-temp": cmd_sweep}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
