"""Command-line entry point: ``spintwa run|validate|compare|cmv``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .config import ConfigError, load_config, validate
from .pipeline import GridMismatch, compare, meshes_from_csv, run


def _load(path, args):
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "samples", None) is not None:
        cfg.n_samples = args.samples
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "out", None) is not None:
        cfg.output = args.out
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    result = run(cfg)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(result.rows)} rows to {result.path}")
    return 0


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}")
        return 1
    report = validate(cfg)
    for e in report.errors:
        print(f"error: {e}")
    for w in report.warnings:
        print(f"warning: {w}")
    if report.ok:
        print("configuration is valid")
    return 0 if report.ok else 1


def cmd_compare(args) -> int:
    report = compare(args.a, args.b)
    print(yaml.safe_dump(report, sort_keys=False), end="")
    return 0


def cmd_cmv(args) -> int:
    written = meshes_from_csv(args.csv, args.out or "meshes", args.kappa, args.level, args.subdivisions)
    print(f"wrote {len(written)} files")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spintwa", description="Spin-pair correlation dynamics: exact, TWA and DTWA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--seed", type=int, help="override the configured RNG seed")
        p.add_argument("--samples", type=int, help="override n_samples")
        p.add_argument("--threads", type=int, help="worker threads for sampling and integration")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="execute a configuration and write an output bundle")
    p.add_argument("config")
    overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="list every problem with a configuration")
    p.add_argument("config")
    overrides(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="max differences between two output bundles")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cmv", help="meshes for every row of a correlations CSV")
    p.add_argument("csv")
    p.add_argument("--out", help="directory for mesh files (default ./meshes)")
    p.add_argument("--kappa", type=float, default=0.5, help="level as a fraction of the peak (default 0.5)")
    p.add_argument("--level", type=float, help="fixed level P instead of kappa")
    p.add_argument("--subdivisions", type=int, default=4, help="icosphere subdivisions (default 4)")
    p.set_defaults(func=cmd_cmv)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GridMismatch, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
