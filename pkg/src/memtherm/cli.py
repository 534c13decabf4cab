"""Command-line entry point.

Precedence is flags, then ``MEMTHERM_*`` environment variables, then the
:class:`StudyConfig` defaults.  Each flag ``--foo-bar`` reads
``MEMTHERM_FOO_BAR`` when absent.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields

from .pipeline import EXIT_USAGE, ConfigError, StudyConfig, run_study

ENV_PREFIX = "MEMTHERM_"

# flag -> (config field, parser)
_FLAGS = {
    "--n-min": ("n_min", int),
    "--n-max": ("n_max", int),
    "--mode-index": ("mode_index", int),
    "--cache-dir": ("cache_dir", str),
    "--out": ("out_dir", str),
    "--bins": ("bins", lambda v: int(v) if v.isdigit() else v),
    "--perm-replicates": ("perm_replicates", int),
    "--seed": ("seed", int),
    "--threads": ("threads", int),
    "--mem-budget-gb": ("mem_budget_gb", float),
    "--time-max": ("time_max", float),
    "--time-step": ("time_step", float),
}


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def env_name(flag: str) -> str:
    return ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memtherm", description="Run the thermalization study over a range of N.")
    for flag, (dest, conv) in _FLAGS.items():
        p.add_argument(flag, dest=dest, type=conv, default=None)
    p.add_argument("--include-n9", dest="include_n9", action="store_true", default=None)
    p.add_argument("--no-cache", dest="use_cache", action="store_false", default=None)
    p.add_argument("--no-sparse-n9", dest="sparse_n9", action="store_false", default=None,
                   help="skip the sparse N=9 energy-width and window-count point")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def resolve_config(args: argparse.Namespace, env=None) -> StudyConfig:
    env = os.environ if env is None else env
    values = {}
    for flag, (dest, conv) in _FLAGS.items():
        v = getattr(args, dest)
        if v is None and env_name(flag) in env:
            v = conv(env[env_name(flag)])
        if v is not None:
            values[dest] = v
    for flag, dest in (("--include-n9", "include_n9"), ("--no-cache", "use_cache"),
                       ("--no-sparse-n9", "sparse_n9")):
        v = getattr(args, dest)
        if v is None and env_name(flag) in env:
            v = _bool(env[env_name(flag)])
            if flag.startswith("--no-"):
                v = not v
        if v is not None:
            values[dest] = v
    known = {f.name for f in fields(StudyConfig)}
    return StudyConfig(**{k: v for k, v in values.items() if k in known})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args).validate()
    except (ConfigError, ValueError) as exc:
        print(f"memtherm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_study(cfg)
    for o in result.outcomes:
        r = o.report
        if r is not None:
            print(f"N={o.N} dim={r.dim} n_bar={r.n_bar:.6f} sigma_t={r.sigma_t:.4g} "
                  f"n_mc={r.n_mc:.6f} window={r.n_window} ({o.seconds:.1f} s)")
    for pt in result.sparse:
        print(f"N={pt.N} dim={pt.dim} sigma_E={pt.sigma_E:.6g} window={pt.n_window} (sparse)")
    for f in result.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return result.exit_code
