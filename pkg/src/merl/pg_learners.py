"""Gradient-based learners.

- TD3 pieces used inside the hybrid loop: one twin critic shared across all
  agent heads, per-agent minibatches, target smoothing, delayed actor steps.
- A DDPG learner (single critic, no smoothing, update every step) that
  trains the predator-prey adversary.
- A centralized-critic baseline (twin critics over joint state and action)
  covering both the TD3-style and DDPG-style variants.
- Mixed-reward scalarization helpers for the static-combination baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn_core import (
    AdamState,
    MlpSpec,
    RngStream,
    adam_step,
    backward_batch,
    backward_from_trace,
    forward_batch,
    forward_trace,
    init_params,
    param_count,
    soft_update,
)
from .policy import TeamPolicy, act, head_actions_batch, make_team

__all__ = [
    "Td3Hyper",
    "SharedCritic",
    "PgTeam",
    "td3_target",
    "critic_update",
    "actor_update",
    "soft_update_targets",
    "DdpgLearner",
    "CentralLearner",
    "MinMaxScaler",
    "mixed_reward",
]


@dataclass
class Td3Hyper:
    gamma: float = 0.95
    tau: float = 0.01
    actor_lr: float = 0.01
    critic_lr: float = 0.01
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_update_freq: int = 2
    batch_size: int = 1024
    mask_terminal_bootstrap: bool = True  # off = strict pseudocode mode

    def __post_init__(self):
        if self.policy_update_freq < 1:
            raise ValueError("policy_update_freq must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")


class SharedCritic:
    """Twin Q networks over (state_k + action_k) shared by every agent head."""

    def __init__(self, obs_dim: int, action_dim: int, hidden_dims, lr: float, rng: RngStream):
        self.spec = MlpSpec(obs_dim + action_dim, tuple(hidden_dims), 1, output_activation="linear")
        self.obs_dim = obs_dim
        self.q1 = init_params(self.spec, rng)
        self.q2 = init_params(self.spec, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.adam = AdamState.for_params(2 * param_count(self.spec), lr)

    def q_values(self, params: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return forward_batch(self.spec, params, np.hstack([states, actions]))[:, 0]

    def min_target(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.minimum(
            self.q_values(self.q1_target, states, actions),
            self.q_values(self.q2_target, states, actions),
        )


@dataclass
class PgTeam:
    """Policy-gradient team: online net, target net, Adam per component."""

    team: TeamPolicy
    target: TeamPolicy
    trunk_adam: AdamState
    head_adams: list[AdamState]
    critic_updates: int = 0
    actor_updates: int = 0

    @classmethod
    def create(cls, obs_dim, action_dim, n_agents, hidden_dims, lr, rng: RngStream) -> "PgTeam":
        team = make_team(obs_dim, action_dim, n_agents, tuple(hidden_dims), rng)
        return cls(
            team=team,
            target=team.clone(),
            trunk_adam=AdamState.for_params(team.trunk.size, lr),
            head_adams=[AdamState.for_params(h.size, lr) for h in team.heads],
        )


def smoothed_target_actions(
    team: TeamPolicy, k: int, next_states: np.ndarray, hyper: Td3Hyper, rng: RngStream
) -> np.ndarray:
    """Target-policy action plus clipped Gaussian smoothing, clamped to [-1, 1]."""
    a = head_actions_batch(team, k, next_states)
    if hyper.policy_noise > 0.0:
        eps = rng.normal(hyper.policy_noise, a.size).reshape(a.shape)
        a = a + np.clip(eps, -hyper.noise_clip, hyper.noise_clip)
    return np.clip(a, -1.0, 1.0)


def td3_target(
    critic: SharedCritic,
    pg: PgTeam,
    k: int,
    batch,
    hyper: Td3Hyper,
    rng: RngStream,
) -> np.ndarray:
    """Clipped double-Q Bellman targets y for agent k's minibatch."""
    states, actions, rewards, next_states, dones = batch
    a2 = smoothed_target_actions(pg.target, k, next_states, hyper, rng)
    q_next = critic.min_target(next_states, a2)
    if hyper.mask_terminal_bootstrap:
        q_next = q_next * (1.0 - dones)
    y = rewards + hyper.gamma * q_next
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite TD3 target")
    return y


def _twin_mse_grads(critic: SharedCritic, pairs):
    """Mean twin MSE over (states, actions, y) pairs plus flat Adam gradient."""
    loss = 0.0
    g1 = np.zeros_like(critic.q1)
    g2 = np.zeros_like(critic.q2)
    scale = 1.0 / len(pairs)
    for states, actions, y in pairs:
        sa = np.hstack([states, actions])
        t = y.shape[0]
        for params, accum in ((critic.q1, g1), (critic.q2, g2)):
            layers, acts = forward_trace(critic.spec, params, sa)
            err = acts[-1][:, 0] - y
            loss += scale * float(np.mean(err**2))
            upstream = (2.0 * scale / t) * err[:, None]
            pg_, _ = backward_from_trace(critic.spec, params, layers, acts, upstream)
            accum += pg_
    return loss, np.concatenate([g1, g2])


def critic_update(critic: SharedCritic, pairs) -> float:
    """One Adam step on both critics against their targets.

    pairs is a list of (states, actions, y); the loss is the mean twin MSE
    across all pairs, returned as computed before the step.
    """
    if not pairs:
        return float("nan")
    loss, grad = _twin_mse_grads(critic, pairs)
    n1 = critic.q1.size
    joined = adam_step(critic.adam, np.concatenate([critic.q1, critic.q2]), grad)
    critic.q1 = joined[:n1]
    critic.q2 = joined[n1:]
    return loss


def actor_objective_gradient(
    pg: PgTeam, critic: SharedCritic, k: int, states: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradient of J = mean Q1(s, pi^k(s)) w.r.t. head k and trunk params.

    Returns (head_grad, trunk_grad, J).
    """
    team = pg.team
    b = states.shape[0]
    t_layers, t_acts = forward_trace(team.trunk_spec, team.trunk, states)
    feat = t_acts[-1]
    h_layers, h_acts = forward_trace(team.head_spec, team.heads[k], feat)
    sa = np.hstack([states, h_acts[-1]])
    c_layers, c_acts = forward_trace(critic.spec, critic.q1, sa)
    q = c_acts[-1][:, 0]
    _, sa_grad = backward_from_trace(critic.spec, critic.q1, c_layers, c_acts, np.full((b, 1), 1.0 / b))
    a_grad = sa_grad[:, critic.obs_dim :]
    head_grad, feat_grad = backward_from_trace(team.head_spec, team.heads[k], h_layers, h_acts, a_grad)
    trunk_grad, _ = backward_from_trace(team.trunk_spec, team.trunk, t_layers, t_acts, feat_grad)
    return head_grad, trunk_grad, float(q.mean())


def actor_update(pg: PgTeam, critic: SharedCritic, k: int, states: np.ndarray) -> None:
    """Ascend mean Q1(s, pi^k(s)) through head k and the shared trunk."""
    head_grad, trunk_grad, _ = actor_objective_gradient(pg, critic, k, states)
    # Adam minimizes, so feed the negated gradient to ascend
    pg.team.heads[k] = adam_step(pg.head_adams[k], pg.team.heads[k], -head_grad)
    pg.team.trunk = adam_step(pg.trunk_adam, pg.team.trunk, -trunk_grad)
    pg.actor_updates += 1


def soft_update_targets(pg: PgTeam, critic: SharedCritic | None, tau: float) -> None:
    pg.target.trunk = soft_update(pg.target.trunk, pg.team.trunk, tau)
    for k in range(pg.team.n_agents):
        pg.target.heads[k] = soft_update(pg.target.heads[k], pg.team.heads[k], tau)
    if critic is not None:
        critic.q1_target = soft_update(critic.q1_target, critic.q1, tau)
        critic.q2_target = soft_update(critic.q2_target, critic.q2, tau)


class DdpgLearner:
    """Single-critic DDPG: no smoothing noise, actor step on every update.

    Equivalent to the TD3 pipeline degenerated to policy_noise=0, update
    frequency 1, and one critic.
    """

    def __init__(self, obs_dim, action_dim, hidden_dims, hyper: Td3Hyper, rng: RngStream):
        self.hyper = hyper
        self.pg = PgTeam.create(obs_dim, action_dim, 1, hidden_dims, hyper.actor_lr, rng)
        self.critic = SharedCritic(obs_dim, action_dim, hidden_dims, hyper.critic_lr, rng)

    def act(self, obs: np.ndarray, noise: tuple[RngStream, float] | None = None) -> np.ndarray:
        return act(self.pg.team, 0, obs, noise)

    def update(self, batch) -> float:
        states, actions, rewards, next_states, dones = batch
        a2 = np.clip(head_actions_batch(self.pg.target, 0, next_states), -1.0, 1.0)
        q_next = self.critic.q_values(self.critic.q1_target, next_states, a2)
        if self.hyper.mask_terminal_bootstrap:
            q_next = q_next * (1.0 - dones)
        y = rewards + self.hyper.gamma * q_next
        sa = np.hstack([states, actions])
        q = forward_batch(self.critic.spec, self.critic.q1, sa)[:, 0]
        err = q - y
        loss = float(np.mean(err**2))
        upstream = (2.0 / y.size) * err[:, None]
        g1, _ = backward_batch(self.critic.spec, self.critic.q1, sa, upstream)
        joined = adam_step(
            self.critic.adam,
            np.concatenate([self.critic.q1, self.critic.q2]),
            np.concatenate([g1, np.zeros_like(g1)]),
        )
        self.critic.q1 = joined[: g1.size]
        self.pg.critic_updates += 1
        actor_update(self.pg, self.critic, 0, states)
        soft_update_targets(self.pg, self.critic, self.hyper.tau)
        return loss


class CentralLearner:
    """Centralized twin critic over joint state/action with a multi-headed
    actor; the MATD3 baseline, or MADDPG-style with use_twin=False."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        n_agents: int,
        actor_hidden,
        critic_hidden,
        hyper: Td3Hyper,
        rng: RngStream,
        use_twin: bool = True,
    ):
        self.hyper = hyper
        self.use_twin = use_twin
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.pg = PgTeam.create(obs_dim, action_dim, n_agents, actor_hidden, hyper.actor_lr, rng)
        self.critic = SharedCritic(
            n_agents * obs_dim, n_agents * action_dim, critic_hidden, hyper.critic_lr, rng
        )

    def _joint_target_actions(self, next_states: np.ndarray, rng: RngStream) -> np.ndarray:
        cols = []
        for k in range(self.n_agents):
            s_k = next_states[:, k * self.obs_dim : (k + 1) * self.obs_dim]
            if self.use_twin:
                cols.append(smoothed_target_actions(self.pg.target, k, s_k, self.hyper, rng))
            else:
                cols.append(np.clip(head_actions_batch(self.pg.target, k, s_k), -1.0, 1.0))
        return np.hstack(cols)

    def update(self, joint_batch, rng: RngStream) -> float:
        """One critic step plus (when due) per-agent delayed actor steps.

        joint_batch is (S, A, r, S2, dones) with S of shape (B, N*obs_dim)
        and A of shape (B, N*action_dim); r is the scalar team-level signal.
        """
        states, actions, rewards, next_states, dones = joint_batch
        if states.shape[1] != self.n_agents * self.obs_dim:
            raise ValueError("misaligned joint batch")
        a2 = self._joint_target_actions(next_states, rng)
        if self.use_twin:
            q_next = self.critic.min_target(next_states, a2)
        else:
            q_next = self.critic.q_values(self.critic.q1_target, next_states, a2)
        if self.hyper.mask_terminal_bootstrap:
            q_next = q_next * (1.0 - dones)
        y = rewards + self.hyper.gamma * q_next
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite centralized target")
        loss = critic_update(self.critic, [(states, actions, y)])
        self.pg.critic_updates += 1
        freq = self.hyper.policy_update_freq if self.use_twin else 1
        if self.pg.critic_updates % freq == 0:
            for k in range(self.n_agents):
                self._actor_step(states, actions, k)
            soft_update_targets(self.pg, self.critic, self.hyper.tau)
        return loss

    def _actor_step(self, states: np.ndarray, actions: np.ndarray, k: int) -> None:
        """Ascend Q1 w.r.t. agent k's action, other agents' actions held
        fixed from the batch."""
        team = self.pg.team
        b = states.shape[0]
        s_k = states[:, k * self.obs_dim : (k + 1) * self.obs_dim]
        feat = forward_batch(team.trunk_spec, team.trunk, s_k)
        a_k = forward_batch(team.head_spec, team.heads[k], feat)
        joint_a = actions.copy()
        joint_a[:, k * self.action_dim : (k + 1) * self.action_dim] = a_k
        sa = np.hstack([states, joint_a])
        _, sa_grad = backward_batch(self.critic.spec, self.critic.q1, sa, np.full((b, 1), 1.0 / b))
        a_grad = sa_grad[
            :,
            self.critic.obs_dim + k * self.action_dim : self.critic.obs_dim + (k + 1) * self.action_dim,
        ]
        head_grad, feat_grad = backward_batch(team.head_spec, team.heads[k], feat, a_grad)
        trunk_grad, _ = backward_batch(team.trunk_spec, team.trunk, s_k, feat_grad)
        team.heads[k] = adam_step(self.pg.head_adams[k], team.heads[k], -head_grad)
        team.trunk = adam_step(self.pg.trunk_adam, team.trunk, -trunk_grad)
        self.pg.actor_updates += 1


class MinMaxScaler:
    """Running min-max normalizer used by the mixed-reward baseline."""

    def __init__(self):
        self.lo = math.inf
        self.hi = -math.inf

    def update(self, x: float) -> None:
        if x < self.lo:
            self.lo = x
        if x > self.hi:
            self.hi = x

    def scale(self, x: float) -> float:
        if self.hi <= self.lo:
            return 0.0
        return (x - self.lo) / (self.hi - self.lo)


def mixed_reward(
    local: float, team: float, w: float, local_scaler: MinMaxScaler, team_scaler: MinMaxScaler
) -> float:
    """Static scalarization: scaled local + w * scaled team, both min-max
    normalized over the values seen so far (update happens first)."""
    local_scaler.update(local)
    team_scaler.update(team)
    return local_scaler.scale(local) + w * team_scaler.scale(team)
