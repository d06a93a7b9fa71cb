"""Figure builders. Each emits both a vector (svg) and raster (png) file
and returns the data it drew, so tests can check the numbers directly."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .aggregate import RunTable, aggregate_curves, artifact_tag, load_runs

__all__ = ["learning_curve", "trajectory_plot", "selection_rate_plot"]

RANDOM_SELECTION_BASELINE = 0.1


def _save(fig, out_dir: Path, stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext in ("svg", "png"):
        p = out_dir / f"{stem}.{ext}"
        fig.savefig(p, dpi=150)
        paths.append(p)
    plt.close(fig)
    return paths


def learning_curve(
    source: Path | list[RunTable],
    out_dir: Path,
    value: str = "eval_mean",
) -> tuple[list[Path], dict[str, pd.DataFrame]]:
    """Mean curve per algorithm with a 95% confidence band across seeds."""
    if isinstance(source, (str, Path)):
        runs = load_runs(Path(source))
        tag = artifact_tag(Path(source) if (Path(source) / "config.lock.json").exists() else None)
    else:
        runs = source
        tag = "untagged"
    curves = aggregate_curves(runs, value=value)
    fig, ax = plt.subplots(figsize=(6, 4))
    for algo, df in curves.items():
        ax.plot(df["frames"], df["mean"], label=algo)
        ax.fill_between(
            df["frames"], df["mean"] - df["ci95"], df["mean"] + df["ci95"], alpha=0.25
        )
    ax.set_xlabel("frames")
    ax.set_ylabel(value)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    paths = _save(fig, out_dir, f"curves_{value}_{tag}")
    return paths, curves


def trajectory_plot(csv_path: Path, out_dir: Path) -> tuple[list[Path], pd.DataFrame]:
    """Agent paths plus POI squares colored by their final observed flag
    (red observed, black not) and the prey path when present."""
    csv_path = Path(csv_path)
    df = pd.read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 5))
    if not df.empty:
        for body, rows in df.groupby("body"):
            rows = rows.sort_values("t")
            if body.startswith("agent"):
                ax.plot(rows["x"], rows["y"], marker=".", markersize=3, label=body)
            elif body == "prey":
                ax.plot(rows["x"], rows["y"], marker=".", markersize=3, linestyle="--", color="tab:red", label=body)
            else:  # poi
                last = rows.iloc[-1]
                observed = str(last.get("observed", "")) in ("1", "1.0", "True")
                ax.scatter(
                    [last["x"]], [last["y"]], marker="s", s=80,
                    color="red" if observed else "black", zorder=3,
                )
        ax.legend(fontsize=7)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    tag = artifact_tag(csv_path.parent.parent, fallback=csv_path)
    paths = _save(fig, out_dir, f"trajectory_{csv_path.stem}_{tag}")
    return paths, df


def selection_rate_plot(source: Path, out_dir: Path) -> tuple[list[Path], dict[str, float]]:
    """Bar per run of the migrant selection rate, with the random-choice
    baseline (1/population = 0.1) drawn as a reference line."""
    source = Path(source)
    if source.is_file():
        files = {source.parent.name or "run": source}
    else:
        files = {}
        if (source / "migration.csv").exists():
            files[source.name or "run"] = source / "migration.csv"
        for p in sorted(source.glob("*/migration.csv")):
            files[p.parent.name] = p
    rates: dict[str, float] = {}
    for name, path in files.items():
        df = pd.read_csv(path)
        rates[name] = float(df["selected"].mean()) if len(df) else float("nan")
    fig, ax = plt.subplots(figsize=(5, 4))
    if rates:
        names = list(rates)
        ax.bar(names, [rates[n] for n in names], color="tab:blue")
        ax.tick_params(axis="x", rotation=30)
    else:
        ax.text(0.5, 0.5, "no migration data", ha="center", va="center", transform=ax.transAxes)
    ax.axhline(RANDOM_SELECTION_BASELINE, color="gray", linestyle=":", label="random baseline")
    ax.set_ylabel("selection rate")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    tag = artifact_tag(source if source.is_dir() else source.parent)
    paths = _save(fig, out_dir, f"selection_rate_{tag}")
    return paths, rates
