"""Gradient-free optimizer: fitness-ranked population of team policies with
elitism, 3-way tournament selection, single-point crossover, and a
probabilistic mutation operator with normal / super / reset flavors.

Also tracks migration events (policy-gradient teams copied into the
population) and whether each migrant survived the next selection step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .nn_core import RngStream
from .policy import TeamPolicy, flatten, unflatten

__all__ = [
    "MutationParams",
    "Population",
    "MigrationLog",
    "rank",
    "select_elites",
    "tournament_select",
    "crossover",
    "mutate",
    "next_generation",
    "migrate",
    "selection_rate",
]

TOURNAMENT_SIZE = 3


@dataclass
class MutationParams:
    mut_prob: float = 0.9
    mut_frac: float = 0.1
    mut_strength: float = 0.1
    supermut_prob: float = 0.05
    resetmut_prob: float = 0.05
    super_mut_scale: float = 10.0  # super mutation stddev multiplier


@dataclass
class Population:
    teams: list[TeamPolicy]
    fitness: list[float | None]
    generation: int = 0
    n_elites: int = 4

    @classmethod
    def create(cls, teams: list[TeamPolicy], n_elites: int) -> "Population":
        return cls(teams=list(teams), fitness=[None] * len(teams), n_elites=n_elites)

    @property
    def size(self) -> int:
        return len(self.teams)

    def clear_fitness(self) -> None:
        self.fitness = [None] * self.size

    def champion_index(self) -> int:
        return rank(self)[0]


def rank(pop: Population) -> list[int]:
    """Indices ordered by fitness descending; ties keep the lower index first."""
    if any(f is None for f in pop.fitness):
        raise ValueError("rank requires every team to have an assigned fitness")
    return sorted(range(pop.size), key=lambda i: (-pop.fitness[i], i))


def select_elites(pop: Population) -> list[int]:
    return rank(pop)[: min(pop.n_elites, pop.size)]


def tournament_select(pop: Population, rng: RngStream) -> int:
    """Winner of a uniform 3-entrant tournament (no repeat entrants)."""
    n = min(TOURNAMENT_SIZE, pop.size)
    entrants = rng.choice(pop.size, size=n, replace=False)
    return min(entrants, key=lambda i: (-pop.fitness[i], i))


def crossover(parent_a: TeamPolicy, parent_b: TeamPolicy, rng: RngStream) -> TeamPolicy:
    """Single-point crossover over the flat weight vectors."""
    if parent_a.trunk_spec != parent_b.trunk_spec or parent_a.head_spec != parent_b.head_spec:
        raise ValueError("crossover requires identical topologies")
    if parent_a.n_agents != parent_b.n_agents:
        raise ValueError("crossover requires equal head counts")
    a = flatten(parent_a)
    b = flatten(parent_b)
    cut = int(rng.integers(0, a.size + 1))
    return unflatten(parent_a, np.concatenate([a[:cut], b[cut:]]))


def mutate(team: TeamPolicy, params: MutationParams, rng: RngStream) -> TeamPolicy:
    """Mutated copy of a (non-elite) team.

    With probability mut_prob, ceil(mut_frac * n_weights) weight slots are
    picked uniformly; each is reset from N(0,1) with prob resetmut_prob,
    hit by a super mutation with prob supermut_prob, and otherwise
    perturbed by N(0, (mut_strength*|w|)^2).
    """
    if rng.uniform() >= params.mut_prob:
        return team.clone()
    flat = flatten(team)
    n_mut = math.ceil(params.mut_frac * flat.size)
    idx = rng.choice(flat.size, size=n_mut, replace=False)
    u = rng.uniform(size=n_mut)
    w = flat[idx]
    sigma = params.mut_strength * np.abs(w)
    is_reset = u < params.resetmut_prob
    is_super = (~is_reset) & (u < params.resetmut_prob + params.supermut_prob)
    sigma[is_super] *= params.super_mut_scale
    noise = rng.gen.normal(0.0, 1.0, n_mut)
    mutated = w + sigma * noise
    mutated[is_reset] = rng.gen.normal(0.0, 1.0, int(is_reset.sum()))
    flat[idx] = mutated
    return unflatten(team, flat)


@dataclass
class MigrationLog:
    """Per-migration record of whether the migrant survived selection."""

    entries: list[dict] = field(default_factory=list)

    def open(self, generation: int, slot: int) -> None:
        self.entries.append({"generation": generation, "migrant_id": slot, "selected": None})

    def pending(self) -> dict | None:
        if self.entries and self.entries[-1]["selected"] is None:
            return self.entries[-1]
        return None

    def resolve(self, selected_slots: set[int]) -> None:
        entry = self.pending()
        if entry is not None:
            entry["selected"] = entry["migrant_id"] in selected_slots

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["generation", "migrant_id", "selected"])
            for e in self.entries:
                if e["selected"] is not None:
                    writer.writerow([e["generation"], e["migrant_id"], int(e["selected"])])


def next_generation(
    pop: Population,
    mut_params: MutationParams,
    rng: RngStream,
    log: MigrationLog | None = None,
) -> Population:
    """Elites copied bit-unchanged; the other k-e slots are filled with
    mutated crossovers of a random elite with a tournament-selected parent.

    A pending migration entry, if any, is resolved here: the migrant counts
    as selected when its slot ends up an elite or a parent of a child.
    """
    k = pop.size
    elite_idx = select_elites(pop)
    selected_slots = set(elite_idx)
    new_teams = [pop.teams[i].clone() for i in elite_idx]
    while len(new_teams) < k:
        ep = elite_idx[int(rng.integers(0, len(elite_idx)))]
        tp = tournament_select(pop, rng)
        selected_slots.update((ep, tp))
        child = crossover(pop.teams[ep], pop.teams[tp], rng)
        new_teams.append(mutate(child, mut_params, rng))
    if log is not None:
        log.resolve(selected_slots)
    return Population(
        teams=new_teams,
        fitness=[None] * k,
        generation=pop.generation + 1,
        n_elites=pop.n_elites,
    )


def migrate(pop: Population, pg_team: TeamPolicy, log: MigrationLog | None = None) -> int:
    """Overwrite the weakest member with a deep copy of the pg team.

    Unassigned fitness counts as weakest; ties go to the higher slot, so a
    freshly bred (unevaluated) population loses its last offspring slot.
    Returns the replaced slot index.
    """
    fit = [-math.inf if f is None else f for f in pop.fitness]
    slot = min(range(pop.size), key=lambda i: (fit[i], -i))
    pop.teams[slot] = pg_team.clone()
    pop.fitness[slot] = None
    if log is not None:
        log.open(pop.generation, slot)
    return slot


def selection_rate(log: MigrationLog, window: int | None = None) -> float | None:
    """Fraction of resolved migrants that survived selection; None if no data."""
    resolved = [e["selected"] for e in log.entries if e["selected"] is not None]
    if window is not None:
        resolved = resolved[-window:]
    if not resolved:
        return None
    return sum(resolved) / len(resolved)
