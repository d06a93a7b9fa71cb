"""Offline figures from training-run CSV artifacts."""

from .aggregate import RunTable, aggregate_curves, ci95_half_width, load_runs
from .figures import learning_curve, selection_rate_plot, trajectory_plot

__all__ = [
    "RunTable",
    "aggregate_curves",
    "ci95_half_width",
    "load_runs",
    "learning_curve",
    "selection_rate_plot",
    "trajectory_plot",
]
