"""Command-line entry point: launch experiments, resume checkpoints, and
sweep a config axis across values (one subdirectory per run)."""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .trainer import run

__all__ = ["main", "sweep"]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="merl-run",
        description="Train multiagent teams with the hybrid evolutionary/TD3 "
        "optimizer or one of the baselines (ea, matd3, maddpg, mixed).",
    )
    p.add_argument("--config", help="INI config file or a config.lock.json from a previous run")
    p.add_argument("--algo", choices=("merl", "ea", "matd3", "maddpg", "mixed"))
    p.add_argument("--task", choices=("coop_nav", "rover", "predator_prey"))
    p.add_argument("--frames", type=int, help="training frame budget")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory for metrics/checkpoints")
    p.add_argument("--coupling", type=int, help="rover coupling requirement (1-7)")
    p.add_argument("--mixed-weight", dest="mixed_weight", type=float, help="team-reward weight for the mixed baseline")
    p.add_argument("--workers", type=int, default=1, help="concurrent runs for sweeps")
    p.add_argument("--resume", help="checkpoint file to resume from")
    p.add_argument("--sweep-axis", help="config key to sweep, e.g. mixed_weight")
    p.add_argument("--sweep-values", help="comma-separated values for the sweep axis")
    return p


def _overrides_from_args(args) -> dict:
    keys = ("algo", "task", "frames", "seed", "out", "coupling", "mixed_weight")
    return {k: getattr(args, k) for k in keys if getattr(args, k) is not None}


def _run_one(config: ExperimentConfig, resume=None) -> float | None:
    rows = run(config, resume=resume)
    return rows[-1]["eval_mean"] if rows else None


def _sweep_worker(payload):
    path, overrides = payload
    config = parse_config(path, overrides)
    return _run_one(config)


def sweep(config_path, base_overrides: dict, axis: str, values: list, workers: int = 1) -> Path:
    """One run per value; final eval means aggregated into sweep.csv."""
    base = parse_config(config_path, base_overrides)
    out_root = Path(base.out)
    jobs = []
    for v in values:
        overrides = dict(base_overrides)
        overrides[axis] = v
        overrides["out"] = str(out_root / f"{axis}_{v}")
        jobs.append((config_path, overrides))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            finals = list(pool.map(_sweep_worker, jobs))
    else:
        finals = [_sweep_worker(j) for j in jobs]
    out_root.mkdir(parents=True, exist_ok=True)
    sweep_csv = out_root / "sweep.csv"
    with open(sweep_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([axis, "final_eval_mean"])
        for v, mean in zip(values, finals):
            writer.writerow([v, "" if mean is None else mean])
    return sweep_csv


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = _overrides_from_args(args)
    try:
        if args.sweep_axis:
            if not args.sweep_values:
                raise ConfigError("--sweep-axis requires --sweep-values")
            values = [v.strip() for v in args.sweep_values.split(",") if v.strip()]
            sweep(args.config, overrides, args.sweep_axis, values, workers=args.workers)
        else:
            config = parse_config(args.config, overrides)
            _run_one(config, resume=args.resume)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
