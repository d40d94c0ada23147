"""``bfic`` command line: regions, curves, simulate, entropy, selftest."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .harness import (SCHEME_JOBS, ConfigError, ExperimentConfig, curves_table, describe,
                      entropy_table, regions_table, run_config, selftest, write_atomic)

EXIT_OK, EXIT_HALTS, EXIT_CONFIG = 0, 1, 2


def _p_list(text: str) -> list[float]:
    """``0.2,0.5`` or a range ``lo:hi:step``."""
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return [round(v, 12) for v in np.linspace(lo, hi, count)]
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bfic", description="Binary fading interference channel "
                                 "capacity regions and transmission-scheme simulations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, default_p):
        sp.add_argument("--config", help="JSON file with the same keys as the flags")
        sp.add_argument("--p", type=_p_list, default=None,
                        help=f"comma list or lo:hi:step (default {default_p})")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=None, dest="root_seed")

    sp = sub.add_parser("regions", help="corner points of every scenario's region")
    common(sp, "0.1:0.9:0.1")
    sp = sub.add_parser("curves", help="sum capacity versus p for every scenario")
    common(sp, "0.01:0.99:0.01")
    sp = sub.add_parser("entropy", help="falsification run of the entropy leakage bound")
    common(sp, "0.3,0.5,0.8")
    sp.add_argument("--trials", type=int, default=None)

    sp = sub.add_parser("simulate", help="run a transmission scheme over p and seeds")
    common(sp, "0.5")
    sp.add_argument("--scheme", choices=[j.value for j in SCHEME_JOBS])
    sp.add_argument("--m", type=int)
    sp.add_argument("--b", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--format", choices=("csv", "json"))
    sp.add_argument("--adaptive", action="store_true", default=None,
                    help="end codes once every decoder has enough clean slots")
    sp.add_argument("--max-block", type=int, dest="max_block")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--max-halt-rate", type=float, dest="max_halt_rate")

    sp = sub.add_parser("selftest", help="quick structural checks and reduced scheme runs")
    sp.add_argument("--corrupt-case-table", action="store_true",
                    help="negative control: swap two case-table rows")
    return ap


def _load(args, scheme: str, default_p: str) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        data[key] = val
    data.setdefault("scheme", scheme)
    if data["scheme"] is None:
        raise ConfigError("simulate needs --scheme")
    data.setdefault("p", _p_list(default_p))
    env = os.environ.get("BFIC_SEED")
    if env is not None:
        try:
            data["root_seed"] = int(env)
        except ValueError:
            raise ConfigError(f"BFIC_SEED must be an integer, got {env!r}") from None
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            rep = selftest(corrupt_case_table=args.corrupt_case_table)
            for r in rep.results:
                print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}  {r.detail}")
            print(f"{'all passed' if rep.ok else 'FAILED'} in {rep.elapsed:.1f}s")
            return EXIT_OK if rep.ok else EXIT_HALTS
        if args.command == "regions":
            cfg = _load(args, "regions", "0.1:0.9:0.1")
            _emit(regions_table(cfg.p), cfg.out)
            return EXIT_OK
        if args.command == "curves":
            cfg = _load(args, "curves", "0.01:0.99:0.01")
            _emit(curves_table(cfg.p), cfg.out)
            return EXIT_OK
        if args.command == "entropy":
            cfg = _load(args, "entropy", "0.3,0.5,0.8")
            if not all(0 < p < 1 for p in cfg.p):
                raise ConfigError("entropy needs p in (0, 1)")
            _emit(entropy_table(cfg.p, cfg.trials, cfg.root_seed), cfg.out)
            return EXIT_OK
        cfg = _load(args, None, "0.5")
        if cfg.job not in SCHEME_JOBS:
            raise ConfigError(f"{cfg.scheme} is not a simulation scheme")
    except ConfigError as exc:
        print(f"bfic: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    summary = run_config(cfg)
    if not cfg.out:
        sys.stdout.write(summary.text)
    print(describe(summary), file=sys.stderr)
    if summary.worst_halt_rate > cfg.max_halt_rate:
        print(f"bfic: halt rate {summary.worst_halt_rate:.3f} above {cfg.max_halt_rate}",
              file=sys.stderr)
        return EXIT_HALTS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
