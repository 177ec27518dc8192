"""Command line entry point: run the sweeps and write CSV tables.

Subcommands::

    cransched sweep-gamma   delay/throughput vs interference threshold
    cransched sweep-alpha   delay/throughput vs power-control exponent
    cransched compare-sfr   proposed scheduler vs soft frequency reuse
    cransched sweep         any sweepable parameter

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

from .engine import ExperimentConfig, run_experiment
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4

COLUMNS = [
    "sweep_value", "delay_violation_prob", "delay_violation_se",
    "throughput_bits_per_frame", "throughput_se", "avg_delay_frames", "avg_delay_se",
    "n_drops", "horizon",
]
_METRIC_COLUMNS = {
    "delay_violation_prob": "delay_violation_probability",
    "delay_violation_se": "delay_violation_probability_se",
    "throughput_bits_per_frame": "throughput",
    "throughput_se": "throughput_se",
    "avg_delay_frames": "average_delay",
    "avg_delay_se": "average_delay_se",
}

# per-experiment settings applied beneath the config file and the flags
PRESETS = {
    "sweep-gamma": {
        "target_delay": 25.0, "sweep_param": "interference_threshold",
        "sweep_values": [0.0, 0.2, 0.4, 0.6, 0.8, 0.99],
    },
    "sweep-alpha": {
        "target_delay": 25.0, "arrival_mode": "edge", "arrival_intensity": 1.5,
        "sweep_param": "power_exponent", "sweep_values": [0.0, 1.0, 2.0, 3.0],
    },
    "compare-sfr": {
        "target_delay": 40.0, "sweep_param": "arrival_intensity",
        "sweep_values": [0.6, 0.9, 1.2],
    },
    "sweep": {},
}
OUTPUT_NAMES = {
    "sweep-gamma": "gamma_sweep.csv",
    "sweep-alpha": "alpha_sweep.csv",
    "compare-sfr": "sfr_comparison.csv",
    "sweep": "sweep.csv",
}

# flag dest -> config key
OVERRIDES = {
    "seed": "master_seed", "drops": "n_drops", "frames": "n_frames", "warmup": "warmup",
    "out": "output_dir", "scheduler": "scheduler", "matcher": "matcher", "workers": "workers",
    "gamma": "interference_threshold", "alpha": "power_exponent", "rho": "arrival_intensity",
    "channels": "n_channels", "users_per_cell": "users_per_cell", "window": "estimator_window",
    "target_delay": "target_delay", "packet_size": "packet_size",
    "arrival_mode": "arrival_mode", "rate_history": "rate_history_mode",
    "param": "sweep_param", "values": "sweep_values",
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of configuration keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--drops", type=int)
    common.add_argument("--frames", type=int)
    common.add_argument("--warmup", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--scheduler", choices=["proposed", "sfr"])
    common.add_argument("--matcher", choices=["hungarian", "greedy"])
    common.add_argument("--workers", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--rho", type=float)
    common.add_argument("--channels", type=int)
    common.add_argument("--users-per-cell", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--target-delay", type=float)
    common.add_argument("--packet-size", type=float)
    common.add_argument("--arrival-mode", choices=["per_user", "edge"])
    common.add_argument("--rate-history", choices=["achieved", "scheduled"])
    common.add_argument("--values", type=_float_list, help="comma-separated sweep values")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="cransched", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep-gamma", parents=[common], help="sweep the interference threshold")
    sub.add_parser("sweep-alpha", parents=[common], help="sweep the power-control exponent")
    sub.add_parser("compare-sfr", parents=[common], help="proposed scheduler vs SFR over load")
    generic = sub.add_parser("sweep", parents=[common], help="sweep any parameter")
    generic.add_argument("--param", required=True)
    return parser


def load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def parse_config(args=None, command: str = "sweep") -> ExperimentConfig:
    """Resolve defaults, experiment preset, config file and flags, in that order.

    ``args`` is either an ``argparse.Namespace`` or a path to a JSON file.
    """
    values = dict(PRESETS.get(command, {}))
    if isinstance(args, (str, os.PathLike)):
        values.update(load_config_file(os.fspath(args)))
        return ExperimentConfig.from_flat(values)
    if args is not None:
        if getattr(args, "config", None):
            values.update(load_config_file(args.config))
        for dest, key in OVERRIDES.items():
            v = getattr(args, dest, None)
            if v is not None:
                values[key] = v
    config = ExperimentConfig.from_flat(values)
    if config.sweep_param is None or not config.sweep_values:
        raise ConfigError("no sweep configured: set sweep_param and sweep_values")
    return config


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return f"{float(v):.9g}"


def _row_cells(row: dict) -> list[str]:
    cells = [_fmt(row["sweep_value"])]
    cells += [_fmt(row[_METRIC_COLUMNS[c]]) for c in COLUMNS[1:7]]
    cells += [_fmt(int(row["n_drops"])), _fmt(int(row["horizon"]))]
    return cells


def write_csv(path: str, rows: list[dict], scheduler_kinds: list[str] | None = None):
    header = (["scheduler_kind"] if scheduler_kinds else []) + COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, row in enumerate(rows):
            cells = _row_cells(row)
            if scheduler_kinds:
                cells = [scheduler_kinds[k]] + cells
            w.writerow(cells)


def run_and_emit(config: ExperimentConfig, command: str = "sweep", quiet: bool = True) -> list[str]:
    """Run the configured experiment and write its CSV plus a config echo."""
    out = config.output_dir
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    progress = None if quiet else _progress
    name = OUTPUT_NAMES.get(command, "sweep.csv")
    path = os.path.join(out, name)
    if command == "compare-sfr":
        rows, kinds = [], []
        for kind in ("proposed", "sfr"):
            part = run_experiment(replace(config, scheduler=kind), config.sweep_param,
                                  list(config.sweep_values), progress=progress)
            rows += part
            kinds += [kind] * len(part)
        write_csv(path, rows, kinds)
    else:
        rows = run_experiment(config, config.sweep_param, list(config.sweep_values),
                              progress=progress)
        write_csv(path, rows)
    echo = os.path.join(out, name.replace(".csv", ".config.json"))
    with open(echo, "w") as fh:
        json.dump(config.to_flat(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path, echo]


def _progress(done: int, total: int):
    if done == total or done % 10 == 0:
        print(f"\r{done}/{total} replications", end="\n" if done == total else "",
              file=sys.stderr, flush=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args, args.command)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = run_and_emit(config, args.command, quiet=args.quiet)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    if not args.quiet:
        for p in paths:
            print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
