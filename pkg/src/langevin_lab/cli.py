"""Command line entry point: ``langevin-lab <subcommand> --config <path> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from langevin_lab.harness import (
    DIVERGENCE_LIMIT,
    ConfigError,
    ExperimentConfig,
    _jsonable,
    run_experiment,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

SUBCOMMANDS = {
    "run-hitting": ("hitting_fosp", "hitting_sosp"),
    "run-escape": ("escape",),
    "run-ergodicity": ("ergodicity",),
    "check-bounds": ("check_bounds",),
    "estimate-constants": ("estimate_constants",),
}

log = logging.getLogger("langevin_lab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="langevin-lab", description="SGLD hitting-time and escape experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (default: output.dir from the config, else ./results)")
        sp.add_argument("--seed", type=int, help="master seed override (unsigned 64-bit)")
        sp.add_argument("--replicas", type=int, help="replica count override")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> ExperimentConfig:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError("$", f"cannot read {args.config}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError("$", "the config must be a JSON object")
    allowed = SUBCOMMANDS[args.command]
    raw.setdefault("experiment", allowed[0])
    if raw["experiment"] not in allowed:
        raise ConfigError("$.experiment", f"{raw['experiment']!r} cannot run under {args.command}")
    for key, attr in (("master_seed", "seed"), ("replicas", "replicas"), ("threads", "threads")):
        value = getattr(args, attr)
        if value is not None:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
        report = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output.get("dir", "results")
    report.write(out)
    for note in report.notices:
        print(f"notice: {note}", file=sys.stderr)
    print(json.dumps(_jsonable({"experiment": report.experiment, "out": str(out), "summary": report.summary}),
                     indent=2, sort_keys=True))
    if report.divergence_fraction > DIVERGENCE_LIMIT:
        print(f"error: {report.divergence_fraction:.1%} of replicas diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
