"""Loading and aggregating training-run CSV artifacts.

A run directory is whatever the trainer CLI wrote: metrics.csv plus an
optional config.lock.json (for the algorithm/seed labels), migration.csv,
and trajectories/*.csv. Everything here is read-only over those files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

__all__ = ["RunTable", "load_runs", "aggregate_curves", "ci95_half_width", "artifact_tag"]


@dataclass
class RunTable:
    algo: str
    seed: int
    table: pd.DataFrame  # metrics rows, frames strictly increasing

    @property
    def frames(self) -> np.ndarray:
        return self.table["frames"].to_numpy()


def _run_label(run_dir: Path) -> tuple[str, int]:
    lock = run_dir / "config.lock.json"
    if lock.exists():
        resolved = json.loads(lock.read_text()).get("resolved", {})
        return resolved.get("algo", run_dir.name), int(resolved.get("seed", 0))
    return run_dir.name, 0


def load_run(run_dir: Path) -> RunTable:
    metrics = Path(run_dir) / "metrics.csv"
    table = pd.read_csv(metrics)
    missing = [c for c in ("frames", "eval_mean") if c not in table.columns]
    if missing:
        raise ValueError(f"{metrics}: missing columns {missing}")
    frames = table["frames"].to_numpy()
    if len(frames) > 1 and not np.all(np.diff(frames) > 0):
        raise ValueError(f"{metrics}: frames must be strictly increasing within a run")
    algo, seed = _run_label(Path(run_dir))
    return RunTable(algo=algo, seed=seed, table=table)


def load_runs(root: Path) -> list[RunTable]:
    """Every run directory under root (or root itself) with a metrics.csv."""
    root = Path(root)
    candidates = [root] if (root / "metrics.csv").exists() else []
    candidates += sorted(p.parent for p in root.glob("*/metrics.csv"))
    runs = [load_run(d) for d in candidates]
    if not runs:
        raise FileNotFoundError(f"no metrics.csv found under {root}")
    return runs


def ci95_half_width(values: np.ndarray) -> float:
    """Two-sided 95% confidence half-width, t distribution, ddof=1."""
    n = len(values)
    if n < 2:
        return 0.0
    t_crit = stats.t.ppf(0.975, n - 1)
    return float(t_crit * np.std(values, ddof=1) / np.sqrt(n))


def aggregate_curves(runs: list[RunTable], value: str = "eval_mean") -> dict[str, pd.DataFrame]:
    """Per algorithm: mean and 95% CI of `value` across seeds vs frames.

    Seeds are aligned on the frame grid common to every run of the group.
    """
    groups: dict[str, list[RunTable]] = {}
    for run in runs:
        groups.setdefault(run.algo, []).append(run)
    out = {}
    for algo, members in sorted(groups.items()):
        common = members[0].frames
        for m in members[1:]:
            common = np.intersect1d(common, m.frames)
        rows = []
        for f in common:
            vals = np.array(
                [float(m.table.loc[m.table["frames"] == f, value].iloc[0]) for m in members]
            )
            rows.append(
                {
                    "frames": f,
                    "mean": float(vals.mean()),
                    "ci95": ci95_half_width(vals),
                    "n_seeds": len(vals),
                }
            )
        out[algo] = pd.DataFrame(rows)
    return out


def artifact_tag(run_dir: Path | None, fallback: Path | None = None) -> str:
    """Short content hash of the run's lockfile (or the input file) used to
    tie figure filenames back to the exact configuration."""
    source = None
    if run_dir is not None and (Path(run_dir) / "config.lock.json").exists():
        source = Path(run_dir) / "config.lock.json"
    elif fallback is not None and Path(fallback).exists():
        source = Path(fallback)
    if source is None:
        return "untagged"
    return hashlib.sha256(source.read_bytes()).hexdigest()[:10]
