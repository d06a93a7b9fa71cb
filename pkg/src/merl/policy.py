"""Multi-headed team policy: shared trunk, one action head per agent.

The trunk is the first hidden layer; each head owns the remaining hidden
layers plus the tanh output layer. Agent k's action comes from head k only,
so heads are independent given the trunk features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import (
    MlpSpec,
    RngStream,
    forward,
    forward_batch,
    init_params,
    param_count,
)

__all__ = ["TeamPolicy", "make_team", "act", "act_team", "flatten", "unflatten"]


@dataclass
class TeamPolicy:
    """One team: trunk spec/params plus one (spec, params) pair per agent head."""

    trunk_spec: MlpSpec
    trunk: np.ndarray
    head_spec: MlpSpec
    heads: list[np.ndarray]

    @property
    def n_agents(self) -> int:
        return len(self.heads)

    def clone(self) -> "TeamPolicy":
        """Deep copy sharing no storage with the original."""
        return TeamPolicy(
            trunk_spec=self.trunk_spec,
            trunk=self.trunk.copy(),
            head_spec=self.head_spec,
            heads=[h.copy() for h in self.heads],
        )


def team_specs(obs_dim: int, action_dim: int, hidden_dims: tuple[int, ...]) -> tuple[MlpSpec, MlpSpec]:
    """Split an architecture into (trunk_spec, head_spec).

    The first hidden layer is the shared trunk; the rest of the hidden
    layers and the output layer live in each head.
    """
    if len(hidden_dims) < 1:
        raise ValueError("need at least one hidden layer for the trunk")
    trunk = MlpSpec(obs_dim, (), hidden_dims[0], output_activation="tanh")
    head = MlpSpec(hidden_dims[0], tuple(hidden_dims[1:]), action_dim, output_activation="tanh")
    return trunk, head


def make_team(
    obs_dim: int, action_dim: int, n_agents: int, hidden_dims: tuple[int, ...], rng: RngStream
) -> TeamPolicy:
    trunk_spec, head_spec = team_specs(obs_dim, action_dim, hidden_dims)
    return TeamPolicy(
        trunk_spec=trunk_spec,
        trunk=init_params(trunk_spec, rng),
        head_spec=head_spec,
        heads=[init_params(head_spec, rng) for _ in range(n_agents)],
    )


def act(
    team: TeamPolicy,
    k: int,
    obs: np.ndarray,
    noise: tuple[RngStream, float] | None = None,
) -> np.ndarray:
    """Agent k's action for one observation: tanh output, optional Gaussian
    exploration noise, clamped back to [-1, 1]."""
    if not 0 <= k < team.n_agents:
        raise IndexError(f"agent index {k} out of range for {team.n_agents} heads")
    feat = forward(team.trunk_spec, team.trunk, obs)
    a = forward(team.head_spec, team.heads[k], feat)
    if noise is not None:
        rng, sigma = noise
        a = a + rng.normal(sigma, a.size)
    return np.clip(a, -1.0, 1.0)


def act_team(
    team: TeamPolicy,
    joint_obs: list[np.ndarray],
    noise: tuple[RngStream, float] | None = None,
) -> list[np.ndarray]:
    """Map act over all agents; observation k feeds head k."""
    if len(joint_obs) != team.n_agents:
        raise ValueError(f"got {len(joint_obs)} observations for {team.n_agents} agents")
    return [act(team, k, obs, noise) for k, obs in enumerate(joint_obs)]


def head_actions_batch(team: TeamPolicy, k: int, obs_batch: np.ndarray) -> np.ndarray:
    """Deterministic batched actions from head k (no noise, no clamp needed)."""
    feat = forward_batch(team.trunk_spec, team.trunk, obs_batch)
    return forward_batch(team.head_spec, team.heads[k], feat)


def flatten(team: TeamPolicy) -> np.ndarray:
    """Trunk params followed by each head's params, in head order."""
    return np.concatenate([team.trunk] + list(team.heads))


def unflatten(team: TeamPolicy, flat: np.ndarray) -> TeamPolicy:
    """Rebuild a team with the same topology from a flat vector."""
    expected = param_count(team.trunk_spec) + team.n_agents * param_count(team.head_spec)
    if flat.shape != (expected,):
        raise ValueError(f"flat length {flat.shape} != expected ({expected},)")
    nt = param_count(team.trunk_spec)
    nh = param_count(team.head_spec)
    heads = []
    off = nt
    for _ in range(team.n_agents):
        heads.append(flat[off : off + nh].copy())
        off += nh
    return TeamPolicy(
        trunk_spec=team.trunk_spec,
        trunk=flat[:nt].copy(),
        head_spec=team.head_spec,
        heads=heads,
    )
