"""Command-line front end: bounds sweeps, single tracking runs, Monte Carlo.

Exit codes: 0 success, 2 configuration error, 3 unobservable geometry,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigError, UnobservableState
from .simkit import (
    bounds_sweep,
    bounds_table,
    cdf_table,
    default_scenario,
    emit_csv,
    load_scenario,
    metric_table,
    run_monte_carlo,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNOBSERVABLE = 3
EXIT_IO = 4


def parse_powers(text: str):
    """Parse 'start:step:stop' (inclusive) or a comma-separated dBm list."""
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            if n < 1:
                raise ValueError("empty power range")
            return [start + k * step for k in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --powers specification {text!r}: {exc}") from exc


def _load_config(args) -> "ScenarioConfig":
    cfg = load_scenario(args.config) if args.config else default_scenario()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_bounds(args) -> int:
    cfg = _load_config(args)
    rows = bounds_sweep(cfg, parse_powers(args.powers))
    emit_csv(bounds_table(rows), args.out)
    flagged = sum(1 for r in rows if not r["observable"])
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({flagged} unobservable)" if flagged else ""))
    if flagged == len(rows):
        return EXIT_UNOBSERVABLE
    return EXIT_OK


def _cdf_paths(out: str, names):
    stem = out[:-4] if out.endswith(".csv") else out
    return {name: f"{stem}_cdf_{name}.csv" for name in names}


def _cmd_track(args) -> int:
    cfg = _load_config(args)
    cfg = replace(cfg, filter_selection=args.filter, mc_runs=1)
    series = run_monte_carlo(cfg)
    emit_csv(metric_table(series), args.out)
    for name, path in _cdf_paths(args.out, series.filters).items():
        emit_csv(cdf_table(series.filters[name]), path)
    print(f"wrote per-step series for {', '.join(series.filters)} to {args.out}")
    return EXIT_OK


def _cmd_mc(args) -> int:
    cfg = _load_config(args)
    if args.filter:
        cfg = replace(cfg, filter_selection=args.filter)
    if args.runs is not None:
        cfg = replace(cfg, mc_runs=args.runs)
    series = run_monte_carlo(cfg)
    rmse_path = f"{args.out_prefix}_rmse.csv"
    emit_csv(metric_table(series), rmse_path)
    for name, path in _cdf_paths(rmse_path, series.filters).items():
        emit_csv(cdf_table(series.filters[name]), path)
    msg = f"wrote {series.n_runs - series.n_failed_runs}/{series.n_runs} runs to {rmse_path}"
    if series.n_failed_runs:
        msg += f" ({series.n_failed_runs} failed)"
    print(msg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radiopose",
        description="6D localization error bounds and tracking over multi-anchor radio links",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser("bounds", help="sweep PEB/RMEB over transmit powers")
    p_bounds.add_argument("--config", default=None, help="scenario YAML (default: built-in scenario)")
    p_bounds.add_argument("--powers", required=True, help="dBm values, 'start:step:stop' or comma list")
    p_bounds.add_argument("--out", required=True, help="output CSV path")
    p_bounds.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_track = sub.add_parser("track", help="run one tracking pass and emit per-step errors")
    p_track.add_argument("--config", default=None)
    p_track.add_argument("--filter", default="all", choices=["fusion", "eskf", "euler", "all"])
    p_track.add_argument("--out", required=True)
    p_track.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p_track.set_defaults(func=_cmd_track)

    p_mc = sub.add_parser("mc", help="Monte Carlo tracking study")
    p_mc.add_argument("--config", default=None)
    p_mc.add_argument("--filter", default=None, choices=["fusion", "eskf", "euler", "all"])
    p_mc.add_argument("--runs", type=int, default=None, help="override mc_runs")
    p_mc.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p_mc.add_argument("--out-prefix", required=True, help="prefix for the emitted CSV files")
    p_mc.set_defaults(func=_cmd_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnobservableState as exc:
        print(f"unobservable geometry: {exc}", file=sys.stderr)
        return EXIT_UNOBSERVABLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
