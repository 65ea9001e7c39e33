"""Command line entry point: ``uegroup <stage> --config cfg.json --out dir``."""

import argparse
import json
import logging
import sys

from .experiment import STAGES, ExperimentConfig, StageError, run_experiment, run_stage
from .scene import ScenarioConfig


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.scenario:
        cfg.scenario = ScenarioConfig.default(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.profile:
        cfg.profile = args.profile
    if args.out:
        cfg.output_dir = args.out
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uegroup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run", "show-config"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--profile", choices=["desk", "full"], help="desk: 50 epochs, full: 200 epochs")
        p.add_argument("--scenario", choices=["LoS", "NLoS"], help="use the default geometry of a scenario")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    if args.command == "show-config":
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    try:
        if args.command == "run":
            out = run_experiment(cfg)
            print(out / "manifest.json")
        else:
            run_stage(args.command, cfg)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
