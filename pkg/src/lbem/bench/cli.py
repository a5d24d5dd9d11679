"""Command-line entry point: ``lbem <command> [--config F] [--seed S] [--out D] [--threads T] [--exact]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import CapExceeded, ConfigError
from .config import DEFAULTS, load_config
from .output import write_csv, write_sidecar

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3


def _commands():
    from .demos import cmd_dqcp, cmd_vqe_h2
    from .experiments import cmd_ecdf, cmd_learn, cmd_rescaling, cmd_selftest
    from .vqa import cmd_vqa

    return {
        "learn": cmd_learn,
        "ecdf": cmd_ecdf,
        "rescaling": cmd_rescaling,
        "dqcp": cmd_dqcp,
        "vqa": cmd_vqa,
        "vqe-h2": cmd_vqe_h2,
        "selftest": cmd_selftest,
    }


def _add_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="JSON file overriding the command defaults")
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config value)")
    p.add_argument("--out", default=d("out"), help="output directory")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads")
    p.add_argument("--exact", action="store_true", default=d(False), help="use exact expectations instead of shots")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbem", description="Learning-based quantum error mitigation experiments.")
    _add_flags(p, suppress=False)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        sp = sub.add_parser(name)
        _add_flags(sp, suppress=True)
    return p


def run(args) -> int:
    cfg, raw = load_config(args.command, args.config)
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        raise ConfigError("threads must be positive")
    result = _commands()[args.command](cfg, seed, args.threads, args.exact)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for t in result.tables:
        hashes[t.name] = write_csv(out / t.name, t.header, t.rows)
    for name, text in result.files.items():
        (out / name).write_text(text)
    inputs = dict(result.inputs)
    if raw is not None:
        inputs["config"] = raw
    echo = {**cfg, "seed": seed, "exact": args.exact}
    write_sidecar(out / f"{args.command}.json", args.command, echo, inputs, hashes, result.summary)
    for t in result.tables:
        print(out / t.name)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
