"""merl-plot: render figures from a training run's CSV artifacts."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import learning_curve, selection_rate_plot, trajectory_plot


def _latest_trajectory(run_dir: Path) -> Path:
    traj = sorted((run_dir / "trajectories").glob("*.csv"))
    if not traj:
        raise FileNotFoundError(f"no trajectory CSVs under {run_dir}/trajectories")
    return traj[-1]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="merl-plot")
    parser.add_argument("metrics_dir", help="run directory, directory of runs, or a CSV file")
    parser.add_argument("--kind", choices=("curves", "traj", "selection"), required=True)
    parser.add_argument("--out", required=True, help="directory for the figure files")
    parser.add_argument("--value", default="eval_mean", help="metrics column for curves")
    args = parser.parse_args(argv)

    source = Path(args.metrics_dir)
    out = Path(args.out)
    try:
        if args.kind == "curves":
            paths, _ = learning_curve(source, out, value=args.value)
        elif args.kind == "traj":
            csv_path = source if source.is_file() else _latest_trajectory(source)
            paths, _ = trajectory_plot(csv_path, out)
        else:
            paths, _ = selection_rate_plot(source, out)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
