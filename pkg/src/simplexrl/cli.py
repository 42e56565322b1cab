"""Command-line entry point.

Subcommands: train-td3, train-ppo, demo-nonstat, sweep, summarize.  All
training subcommands accept --config (YAML file), --seed, --out, and any
number of dotted overrides such as ``--head.V 16`` or ``--use_cdq false``.

Exit codes: 0 all cells ok, 1 any cell failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import harness


def _split_overrides(extra: List[str]) -> dict:
    """Parse trailing ``--dotted.key value`` pairs into an override dict."""
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise harness.ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise harness.ConfigError(f"override {token!r} is missing a value")
            value = extra[i + 1]
            i += 1
        overrides[key] = value
        i += 1
    return overrides


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simplexrl")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train-td3", "train-ppo", "demo-nonstat", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", default=None, help="seed or comma list of seeds")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("summarize")
    p.add_argument("--out", required=True, help="experiment directory to aggregate")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", default=None)
    return parser


_ALGO = {"train-td3": "td3", "train-ppo": "ppo", "demo-nonstat": "nonstat"}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _split_overrides(extra)
        if args.command in _ALGO:
            overrides["algorithm"] = _ALGO[args.command]
        if args.seed is not None:
            overrides["seeds"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        cfg = harness.config_parse(args.config, overrides)
        if args.command == "sweep" and not cfg.sweep:
            raise harness.ConfigError("sweep subcommand requires a 'sweep' section")
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "summarize":
        harness.summarize(args.out, cfg if args.config else None)
        return 0
    return harness.run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
