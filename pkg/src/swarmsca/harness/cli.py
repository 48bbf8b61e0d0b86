"""Command-line entry point: one subcommand per campaign, plus swarm and replay tools.

Exit codes: 0 success, 2 invalid configuration, 3 dataset unavailable.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, DatasetUnavailableError, ScenarioError, SwarmScaError
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .experiments import replay, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI configuration file; flags override its values")
    p.add_argument("--dataset", help="dataset name, e.g. synthetic_masked or synthetic_masked:desync=100")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    p.add_argument("--distances", dest="distances_m", type=_floats, help="comma-separated standoff distances in meters")
    p.add_argument("--drones", dest="drone_counts", type=_ints, help="comma-separated drone counts (1-4)")
    p.add_argument("--xso-mode", dest="x_so_mode", choices=("elementwise", "cross_window"))
    p.add_argument("--align-attack", dest="align_attack_phase", action="store_true", default=None, help="also realign attack traces")
    p.add_argument("--n-poi", dest="n_poi", type=int)
    p.add_argument("--w-so", dest="w_so", type=float)
    p.add_argument("--n-attack", dest="n_attack", type=int, help="use only the first N attack traces")
    p.add_argument("--checkpoints", type=_ints)
    p.add_argument("--drone-datasets", dest="drone_datasets", type=lambda s: tuple(x.strip() for x in s.split(";")), help="A;B;C dataset names for cross_dataset")
    p.add_argument("--reseed-dataset", dest="reseed_dataset", action="store_true", default=None, help="draw a fresh synthetic corpus per seed")
    p.add_argument("--ascad-dir", dest="ascad_dir")
    p.add_argument("--jobs", type=int)


_OVERRIDE_KEYS = (
    "dataset",
    "output_dir",
    "seeds",
    "distances_m",
    "drone_counts",
    "x_so_mode",
    "align_attack_phase",
    "n_poi",
    "w_so",
    "n_attack",
    "checkpoints",
    "drone_datasets",
    "reseed_dataset",
    "ascad_dir",
    "jobs",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmsca", description="Multi-receiver EM side-channel experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_common(sub.add_parser(name, help=f"run the {name} campaign"))
    rp = sub.add_parser("replay", help="rerun a campaign from its manifest.json")
    rp.add_argument("manifest")
    rp.add_argument("--out", dest="output_dir")
    sw = sub.add_parser("swarm", help="simulate the swarm protocol for a scenario file")
    sw.add_argument("scenario", nargs="?", help="scenario file (default: lossless)")
    sw.add_argument("--duration", type=float, default=1.0, help="seconds (default 1.0)")
    sw.add_argument("--t-hb", type=float, default=0.020, help="heartbeat period in seconds (default 0.020)")
    sw.add_argument("--log", help="write the JSON-lines event log here (default stdout)")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k, None) is not None}
    overrides["experiment"] = args.command
    if args.config:
        return load_config(args.config, overrides)
    return ExperimentConfig.from_dict(overrides)


def _swarm(args) -> int:
    from ..swarm.protocol import load_scenario, run_protocol

    scenario = load_scenario(args.scenario) if args.scenario else None
    result = run_protocol(scenario=scenario, duration=args.duration, t_hb=args.t_hb)
    if args.log:
        result.write(args.log)
        counts = {}
        for r in result.log:
            counts[r["event"]] = counts.get(r["event"], 0) + 1
        print(json.dumps({"events": counts, "final": {k: n.to_dict() for k, n in result.nodes.items()}}, sort_keys=True, indent=2))
    else:
        sys.stdout.write(result.to_jsonl())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "swarm":
            return _swarm(args)
        if args.command == "replay":
            result = replay(args.manifest, args.output_dir)
        else:
            result = run_experiment(config_from_args(args))
    except DatasetUnavailableError as exc:
        print(f"error: dataset unavailable: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except (ConfigError, ScenarioError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SwarmScaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({k: v for k, v in result.summary.items() if k != "cells"}, sort_keys=True, default=str))
    for key, path in sorted(result.paths.items()):
        print(f"{key}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
