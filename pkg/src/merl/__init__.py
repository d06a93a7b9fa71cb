"""Multiagent evolutionary reinforcement learning.

A split-level trainer: a neuroevolutionary population optimizes the sparse
team reward while a TD3 learner optimizes dense per-agent rewards, with
periodic migration of the gradient-trained team into the population. Ships
with three cooperative particle-world benchmarks and centralized-critic
baselines.
"""

from .config import ExperimentConfig, parse_config
from .trainer import run

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "parse_config", "run", "__version__"]
