"""Deterministic 2-D particle worlds: cooperative navigation, rover domain,
predator-prey.

All bodies are point masses driven by 2-D acceleration commands in [-1, 1]
through a damped double integrator:

    v <- damping * v + accel_gain * a   (speed-clamped per body)
    p <- p + v * dt

Every draw goes through the RngStream handed to reset(), so a (seed, action
sequence) pair reproduces a trajectory bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn_core import RngStream

__all__ = [
    "EnvConfig",
    "WorldState",
    "StepResult",
    "CoopNavEnv",
    "RoverEnv",
    "PredatorPreyEnv",
    "make_env",
    "scripted_flee_prey",
]

TASKS = ("coop_nav", "rover", "predator_prey")

LIDAR_BINS = 36  # 10 degree brackets over 360 degrees, per channel


@dataclass
class EnvConfig:
    task: str
    n_agents: int = 3
    n_pois: int = 3  # POIs (coop-nav/rover) or obstacle landmarks (predator-prey)
    coupling: int = 1  # rover: simultaneous observers needed per POI
    prey_speed_factor: float = 1.3  # 1.3 simple, 2.0 hard
    obs_radius: float | None = None  # rover POI-observation radius
    world_size: float = 1.0  # placement half-extent; world is 2x2 units
    ep_len: int | None = None  # defaults: 50 (coop-nav, predator-prey), 70 (rover)
    dt: float = 0.1
    damping: float = 0.75
    accel_gain: float = 0.5
    max_speed: float = 1.0
    agent_radius: float = 0.1
    poi_radius: float = 0.05
    landmark_radius: float = 0.2
    prey_radius: float = 0.05
    collision_penalty: float = 1.0
    d_floor: float = 0.05  # rover LIDAR intensity cap: 1/max(d, d_floor)
    fixed_agent_pos: tuple | None = None  # overrides random placement
    fixed_poi_pos: tuple | None = None
    fuel: tuple | None = None  # per-rover cumulative travel budget (world units)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.n_agents < 1 or self.n_pois < 0:
            raise ValueError("n_agents must be >= 1 and n_pois >= 0")
        if not 1 <= self.coupling <= 7:
            raise ValueError(f"coupling must be in [1, 7], got {self.coupling}")
        if self.task != "rover" and self.coupling != 1:
            raise ValueError("coupling is a rover-domain knob")
        if self.task == "predator_prey" and self.prey_speed_factor not in (1.3, 2.0):
            raise ValueError("prey_speed_factor must be 1.3 (simple) or 2.0 (hard)")
        if self.ep_len is None:
            self.ep_len = 70 if self.task == "rover" else 50
        if self.obs_radius is None:
            # 10% of the world diagonal
            self.obs_radius = 0.1 * (2.0 * self.world_size) * math.sqrt(2.0)

    @property
    def obs_dim(self) -> int:
        n, p = self.n_agents, self.n_pois
        if self.task == "coop_nav":
            return 4 + 2 * p + 2 * (n - 1)
        if self.task == "rover":
            return 2 * LIDAR_BINS
        # predator: vel, pos, landmarks, other predators + prey rel, their vels
        return 4 + 2 * p + 2 * (n - 1) + 2 + 2 * (n - 1) + 2

    @property
    def prey_obs_dim(self) -> int:
        return 4 + 2 * self.n_pois + 4 * self.n_agents

    @property
    def action_dim(self) -> int:
        return 2


@dataclass
class WorldState:
    agent_pos: np.ndarray  # (N, 2)
    agent_vel: np.ndarray  # (N, 2)
    poi_pos: np.ndarray  # (P, 2)
    poi_observed: np.ndarray  # (P,) bool, rover latch
    t: int = 0
    prey_pos: np.ndarray | None = None
    prey_vel: np.ndarray | None = None
    local_reward_sum: float = 0.0  # coop-nav running average numerator
    touches_cum: int = 0  # predator-prey episode touch count
    fuel_remaining: np.ndarray | None = None

    def copy(self) -> "WorldState":
        return WorldState(
            agent_pos=self.agent_pos.copy(),
            agent_vel=self.agent_vel.copy(),
            poi_pos=self.poi_pos.copy(),
            poi_observed=self.poi_observed.copy(),
            t=self.t,
            prey_pos=None if self.prey_pos is None else self.prey_pos.copy(),
            prey_vel=None if self.prey_vel is None else self.prey_vel.copy(),
            local_reward_sum=self.local_reward_sum,
            touches_cum=self.touches_cum,
            fuel_remaining=None if self.fuel_remaining is None else self.fuel_remaining.copy(),
        )


@dataclass
class StepResult:
    joint_obs: list
    local_rewards: np.ndarray  # (N,)
    global_reward: float
    done: bool
    info: dict = field(default_factory=dict)


def _integrate(pos, vel, accel, damping, gain, vmax, dt):
    """Damped double-integrator update, in place, with speed clamping."""
    vel *= damping
    vel += gain * accel
    speed = np.linalg.norm(vel, axis=-1, keepdims=True)
    np.divide(vel * vmax, speed, out=vel, where=speed > vmax)
    pos += vel * dt


def _check_actions(joint_action, n_agents):
    acts = np.asarray(joint_action, dtype=np.float64)
    if acts.shape != (n_agents, 2):
        raise ValueError(f"expected joint action shape ({n_agents}, 2), got {acts.shape}")
    if np.isnan(acts).any():
        raise ValueError("NaN in joint action")
    return np.clip(acts, -1.0, 1.0)


class _ParticleEnvBase:
    def __init__(self, config: EnvConfig):
        self.config = config

    def _place(self, rng: RngStream, n: int) -> np.ndarray:
        w = self.config.world_size
        return rng.uniform(-w, w, (n, 2)).astype(np.float64)

    def _base_reset(self, rng: RngStream) -> WorldState:
        c = self.config
        if c.fixed_agent_pos is not None:
            agent_pos = np.array(c.fixed_agent_pos, dtype=np.float64).reshape(c.n_agents, 2)
        else:
            agent_pos = self._place(rng, c.n_agents)
        if c.fixed_poi_pos is not None:
            poi_pos = np.array(c.fixed_poi_pos, dtype=np.float64).reshape(c.n_pois, 2)
        else:
            poi_pos = self._place(rng, c.n_pois)
        return WorldState(
            agent_pos=agent_pos,
            agent_vel=np.zeros((c.n_agents, 2), np.float64),
            poi_pos=poi_pos,
            poi_observed=np.zeros(c.n_pois, dtype=bool),
            fuel_remaining=None if c.fuel is None else np.array(c.fuel, dtype=np.float64),
        )

    def _move_agents(self, state: WorldState, acts: np.ndarray) -> None:
        c = self.config
        if state.fuel_remaining is not None:
            # out-of-fuel rovers are dead weight: no thrust, velocity zeroed
            empty = state.fuel_remaining <= 0.0
            acts = acts.copy()
            acts[empty] = 0.0
            state.agent_vel[empty] = 0.0
        _integrate(state.agent_pos, state.agent_vel, acts, c.damping, c.accel_gain, c.max_speed, c.dt)
        if state.fuel_remaining is not None:
            state.fuel_remaining -= np.linalg.norm(state.agent_vel, axis=1) * c.dt


# ---------------------------------------------------------------------------
# Cooperative navigation
# ---------------------------------------------------------------------------


class CoopNavEnv(_ParticleEnvBase):
    """N agents cover N POIs; shared dense reward, episode-mean team reward."""

    def reset(self, rng: RngStream) -> tuple[WorldState, list]:
        state = self._base_reset(rng)
        return state, [self.observe(state, k) for k in range(self.config.n_agents)]

    def observe(self, state: WorldState, k: int) -> np.ndarray:
        pos = state.agent_pos
        me = pos[k]
        parts = [state.agent_vel[k], me]
        parts.extend(state.poi_pos - me)
        parts.extend(pos[j] - me for j in range(self.config.n_agents) if j != k)
        return np.concatenate(parts)

    def rewards(self, state: WorldState) -> tuple[np.ndarray, float, int]:
        """Shared local reward, per-step; returns (jl, l, collisions)."""
        c = self.config
        # sum over POIs of the distance to the nearest agent
        d = np.linalg.norm(state.poi_pos[:, None, :] - state.agent_pos[None, :, :], axis=2)
        cover_cost = d.min(axis=1).sum() if c.n_pois else 0.0
        collisions = 0
        for i in range(c.n_agents):
            for j in range(i + 1, c.n_agents):
                if np.linalg.norm(state.agent_pos[i] - state.agent_pos[j]) < 2 * c.agent_radius:
                    collisions += 1
        l = -cover_cost - c.collision_penalty * collisions
        return np.full(c.n_agents, l), l, collisions

    def step(self, state: WorldState, joint_action) -> StepResult:
        c = self.config
        acts = _check_actions(joint_action, c.n_agents)
        self._move_agents(state, acts)
        state.t += 1
        jl, l, collisions = self.rewards(state)
        state.local_reward_sum += l
        g = state.local_reward_sum / state.t  # running episode average
        obs = [self.observe(state, k) for k in range(c.n_agents)]
        return StepResult(obs, jl, g, state.t >= c.ep_len, {"collisions": collisions})


# ---------------------------------------------------------------------------
# Rover domain
# ---------------------------------------------------------------------------


class RoverEnv(_ParticleEnvBase):
    """Rovers observe POIs under a coupling requirement; LIDAR-style sensing.

    A POI latches to observed once >= coupling rovers sit within obs_radius
    simultaneously. Team reward is the observed fraction; each rover's local
    reward is the negative distance to its closest POI.
    """

    def reset(self, rng: RngStream) -> tuple[WorldState, list]:
        state = self._base_reset(rng)
        return state, [self.observe(state, k) for k in range(self.config.n_agents)]

    def observe(self, state: WorldState, k: int) -> np.ndarray:
        c = self.config
        me = state.agent_pos[k]
        others = np.delete(state.agent_pos, k, axis=0)
        obs = np.zeros(2 * LIDAR_BINS, np.float64)
        obs[:LIDAR_BINS] = self._lidar_channel(me, state.poi_pos)
        obs[LIDAR_BINS:] = self._lidar_channel(me, others)
        return obs

    def _lidar_channel(self, me: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Per 10-degree bracket, intensity of the closest reflector only."""
        out = np.zeros(LIDAR_BINS, np.float64)
        if len(points) == 0:
            return out
        rel = points - me
        d = np.linalg.norm(rel, axis=1)
        ang = np.arctan2(rel[:, 1], rel[:, 0]) % (2.0 * math.pi)
        bins = np.minimum((ang / (2.0 * math.pi / LIDAR_BINS)).astype(int), LIDAR_BINS - 1)
        nearest = np.full(LIDAR_BINS, np.inf)
        np.minimum.at(nearest, bins, d)
        hit = np.isfinite(nearest)
        out[hit] = 1.0 / np.maximum(nearest[hit], self.config.d_floor)
        return out

    def rewards(self, state: WorldState) -> tuple[np.ndarray, float]:
        c = self.config
        d = np.linalg.norm(state.poi_pos[:, None, :] - state.agent_pos[None, :, :], axis=2)
        within = d <= c.obs_radius  # (P, N)
        state.poi_observed |= within.sum(axis=1) >= c.coupling
        g = state.poi_observed.mean() if c.n_pois else 0.0
        jl = -d.min(axis=0)  # distance to closest POI, per rover
        return jl, float(g)

    def step(self, state: WorldState, joint_action) -> StepResult:
        c = self.config
        acts = _check_actions(joint_action, c.n_agents)
        self._move_agents(state, acts)
        state.t += 1
        jl, g = self.rewards(state)
        obs = [self.observe(state, k) for k in range(c.n_agents)]
        return StepResult(obs, jl, g, state.t >= c.ep_len, {})


# ---------------------------------------------------------------------------
# Predator-prey
# ---------------------------------------------------------------------------


def scripted_flee_prey(env: "PredatorPreyEnv", state: WorldState) -> np.ndarray:
    """Deterministic prey: inverse-square repulsion from predators, nudged
    back inside the world near the boundary."""
    rel = state.prey_pos[None, :] - state.agent_pos
    d2 = np.maximum((rel**2).sum(axis=1), 1e-6)
    vec = (rel / d2[:, None]).sum(axis=0)
    w = env.config.world_size
    outside = np.abs(state.prey_pos) > 0.9 * w
    vec[outside] -= 2.0 * np.sign(state.prey_pos[outside])
    n = np.linalg.norm(vec)
    return vec / n if n > 1.0 else vec


class PredatorPreyEnv(_ParticleEnvBase):
    """N predators chase one faster prey among L landmark obstacles.

    The prey is part of the environment; its controller is a callable
    (env, state) -> action set via set_prey_controller. Touches add +1 to
    the touching predator's local reward, -1 to the prey, and accumulate
    into the team reward.
    """

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.prey_controller = scripted_flee_prey

    def set_prey_controller(self, controller) -> None:
        self.prey_controller = controller

    def reset(self, rng: RngStream) -> tuple[WorldState, list]:
        state = self._base_reset(rng)
        state.prey_pos = self._place(rng, 1)[0]
        state.prey_vel = np.zeros(2, np.float64)
        return state, [self.observe(state, k) for k in range(self.config.n_agents)]

    def observe(self, state: WorldState, k: int) -> np.ndarray:
        c = self.config
        me = state.agent_pos[k]
        parts = [state.agent_vel[k], me]
        parts.extend(state.poi_pos - me)  # landmarks
        parts.extend(state.agent_pos[j] - me for j in range(c.n_agents) if j != k)
        parts.append(state.prey_pos - me)
        parts.extend(state.agent_vel[j] for j in range(c.n_agents) if j != k)
        parts.append(state.prey_vel)
        return np.concatenate(parts)

    def observe_prey(self, state: WorldState) -> np.ndarray:
        parts = [state.prey_vel, state.prey_pos]
        parts.extend(state.poi_pos - state.prey_pos)
        parts.extend(state.agent_pos - state.prey_pos)
        parts.extend(state.agent_vel)
        return np.concatenate(parts)

    def touches(self, state: WorldState) -> np.ndarray:
        """Boolean per predator: circle contact with the prey."""
        c = self.config
        d = np.linalg.norm(state.agent_pos - state.prey_pos[None, :], axis=1)
        return d < (c.agent_radius + c.prey_radius)

    def step(self, state: WorldState, joint_action) -> StepResult:
        c = self.config
        acts = _check_actions(joint_action, c.n_agents)
        prey_obs = self.observe_prey(state)
        prey_act = np.clip(np.asarray(self.prey_controller(self, state), np.float64), -1.0, 1.0)
        self._move_agents(state, acts)
        _integrate(
            state.prey_pos,
            state.prey_vel,
            prey_act,
            c.damping,
            1.33 * c.accel_gain,
            c.prey_speed_factor * c.max_speed,
            c.dt,
        )
        state.t += 1
        touch = self.touches(state)
        n_touch = int(touch.sum())
        state.touches_cum += n_touch
        d = np.linalg.norm(state.agent_pos - state.prey_pos[None, :], axis=1)
        jl = -d + touch.astype(np.float64)
        prey_reward = -float(n_touch)
        obs = [self.observe(state, k) for k in range(c.n_agents)]
        done = state.t >= c.ep_len
        return StepResult(
            obs,
            jl,
            float(state.touches_cum),
            done,
            {
                "touches": n_touch,
                "prey_obs": prey_obs,
                "prey_action": prey_act,
                "prey_reward": prey_reward,
                "prey_next_obs": self.observe_prey(state),
            },
        )


def make_env(config: EnvConfig):
    cls = {"coop_nav": CoopNavEnv, "rover": RoverEnv, "predator_prey": PredatorPreyEnv}[config.task]
    return cls(config)
