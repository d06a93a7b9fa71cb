"""Training loops: the hybrid generation cycle (population rollouts,
evolution, shared-critic TD3 updates, migration), the EA-only ablation,
and the centralized-critic baselines, plus the shared evaluation protocol.

Frame accounting counts one frame per joint environment step taken by any
team during training; held-out evaluation episodes are never counted.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .envs import PredatorPreyEnv, StepResult, WorldState, make_env
from .evolution import (
    MigrationLog,
    MutationParams,
    Population,
    migrate,
    next_generation,
    selection_rate,
)
from .nn_core import RngStream
from .pg_learners import (
    CentralLearner,
    DdpgLearner,
    MinMaxScaler,
    PgTeam,
    SharedCritic,
    Td3Hyper,
    actor_update,
    critic_update,
    mixed_reward,
    soft_update_targets,
    td3_target,
)
from .policy import TeamPolicy, act, act_team, make_team
from .replay import ReplayBuffer, Transition

__all__ = [
    "FrameCounter",
    "EvalReport",
    "TrajectoryRecorder",
    "rollout",
    "MerlTrainer",
    "CentralTrainer",
    "MetricsWriter",
    "run",
    "EVAL_SEEDS",
]

# held-out task instances for the reported metric, disjoint from training seeds
EVAL_SEEDS = tuple(range(2019, 2029))

METRICS_COLUMNS = [
    "frames",
    "generation",
    "champion_fitness",
    "eval_mean",
    "eval_std",
    "selection_rate",
    "wall_time",
]


class FrameCounter:
    """Cumulative joint-step count with a per-component breakdown."""

    def __init__(self):
        self.total = 0
        self.by_component: dict[str, int] = {}

    def add(self, n: int, component: str) -> None:
        self.total += n
        self.by_component[component] = self.by_component.get(component, 0) + n


@dataclass
class EvalReport:
    frames: int
    champion_id: int
    mean: float
    std: float
    scores: list[float]


class TrajectoryRecorder:
    """Collects per-step body positions and rewards for one episode."""

    def __init__(self):
        self.rows: list[list] = []

    def _poi_rows(self, t: int, state: WorldState):
        for j, p in enumerate(state.poi_pos):
            self.rows.append([t, f"poi{j}", p[0], p[1], "", "", int(state.poi_observed[j])])

    def record_reset(self, state: WorldState) -> None:
        for k, p in enumerate(state.agent_pos):
            self.rows.append([0, f"agent{k}", p[0], p[1], "", "", ""])
        self._poi_rows(0, state)
        if state.prey_pos is not None:
            self.rows.append([0, "prey", state.prey_pos[0], state.prey_pos[1], "", "", ""])

    def record_step(self, state: WorldState, res: StepResult) -> None:
        t = state.t
        for k, p in enumerate(state.agent_pos):
            self.rows.append(
                [t, f"agent{k}", p[0], p[1], res.local_rewards[k], res.global_reward, ""]
            )
        self._poi_rows(t, state)
        if state.prey_pos is not None:
            self.rows.append(
                [t, "prey", state.prey_pos[0], state.prey_pos[1], res.info.get("prey_reward", ""), "", ""]
            )

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "body", "x", "y", "local_reward", "global_reward", "observed"])
            writer.writerows(self.rows)


def rollout(
    env,
    team: TeamPolicy,
    xi: int,
    noise: tuple[RngStream, float] | None,
    env_rng: RngStream,
    buffers: list[ReplayBuffer] | None = None,
    prey_buffer: ReplayBuffer | None = None,
    frames: FrameCounter | None = None,
    component: str = "rollout",
    recorder: TrajectoryRecorder | None = None,
) -> float:
    """Run xi episodes; returns the mean of the terminal team rewards.

    Each joint step optionally appends every agent's transition to its own
    buffer and the prey's transition (predator-prey) to the prey buffer.
    """
    total = 0.0
    n = team.n_agents
    for _ in range(xi):
        state, jobs = env.reset(env_rng)
        if recorder is not None:
            recorder.record_reset(state)
        terminal_g = 0.0
        done = False
        while not done:
            ja = act_team(team, jobs, noise)
            res = env.step(state, ja)
            if frames is not None:
                frames.add(1, component)
            if buffers is not None:
                for k in range(n):
                    buffers[k].push(
                        Transition(jobs[k], ja[k], float(res.local_rewards[k]), res.joint_obs[k], res.done)
                    )
            if prey_buffer is not None and "prey_obs" in res.info:
                info = res.info
                prey_buffer.push(
                    Transition(
                        info["prey_obs"], info["prey_action"], info["prey_reward"],
                        info["prey_next_obs"], res.done,
                    )
                )
            if recorder is not None:
                recorder.record_step(state, res)
            jobs = res.joint_obs
            done = res.done
            terminal_g = float(res.global_reward)
        total += terminal_g
    return total / xi


def _evaluate_team(
    env_config, team: TeamPolicy, frames_now: int, champion_id: int,
    prey_actor: TeamPolicy | None = None, recorder: TrajectoryRecorder | None = None,
) -> EvalReport:
    """Noiseless score over the fixed held-out instances; training state
    (buffers, counters, training RNG streams) is never touched."""
    scores = []
    for i, seed in enumerate(EVAL_SEEDS):
        env = make_env(env_config)
        if isinstance(env, PredatorPreyEnv) and prey_actor is not None:
            env.set_prey_controller(
                lambda e, s, _actor=prey_actor: act(_actor, 0, e.observe_prey(s), None)
            )
        rng = RngStream(seed)
        rec = recorder if i == 0 else None
        scores.append(rollout(env, team, 1, None, rng, recorder=rec))
    arr = np.asarray(scores)
    return EvalReport(frames_now, champion_id, float(arr.mean()), float(arr.std()), scores)


class MetricsWriter:
    """Append-only CSV of per-evaluation training metrics."""

    def __init__(self, path):
        self.path = Path(path)
        self.rows: list[dict] = []
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(METRICS_COLUMNS)

    def write(self, **row) -> None:
        self.rows.append(row)
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([row.get(c, "") for c in METRICS_COLUMNS])


class MerlTrainer:
    """Hybrid loop: an evolving population maximizes the team reward while a
    TD3 team maximizes dense local rewards and migrates into the population.

    algo="ea" runs the ablation: same fitness rollouts and evolution, with
    every gradient component (buffers, critic, migration) disabled.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.env_config = config.env_config()
        self.hyper = config.hyper()
        self.mut_params = config.mutation()
        self.use_pg = config.algo == "merl"
        self.env = make_env(self.env_config)

        seq = np.random.SeedSequence(config.seed)
        children = seq.spawn(10)
        names = [
            "pop_init", "pg_init", "env_reset", "exploration", "evolution",
            "replay", "smoothing", "prey_init", "prey_noise", "prey_replay",
        ]
        self.rng = {name: RngStream(child) for name, child in zip(names, children)}

        obs_dim, act_dim = self.env_config.obs_dim, self.env_config.action_dim
        n = self.env_config.n_agents
        hidden = tuple(config.actor_hidden)
        self.pop = Population.create(
            [make_team(obs_dim, act_dim, n, hidden, self.rng["pop_init"]) for _ in range(config.pop_size)],
            n_elites=config.n_elites,
        )
        self.pg = PgTeam.create(obs_dim, act_dim, n, hidden, self.hyper.actor_lr, self.rng["pg_init"])
        self.critic = SharedCritic(
            obs_dim, act_dim, tuple(config.critic_hidden), self.hyper.critic_lr, self.rng["pg_init"]
        )
        self.buffers = [ReplayBuffer(config.buffer_capacity) for _ in range(n)]
        self.frames = FrameCounter()
        self.migration_log = MigrationLog()

        self.prey: DdpgLearner | None = None
        self.prey_buffer: ReplayBuffer | None = None
        if isinstance(self.env, PredatorPreyEnv):
            self.prey = DdpgLearner(
                self.env_config.prey_obs_dim, act_dim, hidden, self.hyper, self.rng["prey_init"]
            )
            self.prey_buffer = ReplayBuffer(config.buffer_capacity)
            sigma = config.exploration_noise
            self.env.set_prey_controller(
                lambda e, s: self.prey.act(e.observe_prey(s), (self.rng["prey_noise"], sigma))
            )

    # ------------------------------------------------------------------
    def run_generation(self) -> dict:
        cfg = self.config
        sigma = cfg.exploration_noise
        push_buffers = self.buffers if self.use_pg else None

        for i, team in enumerate(self.pop.teams):
            fit = rollout(
                self.env, team, cfg.rollouts_per_fitness, None, self.rng["env_reset"],
                buffers=push_buffers, prey_buffer=self.prey_buffer,
                frames=self.frames, component="population_fitness",
            )
            if self.use_pg:
                rollout(
                    self.env, team, 1, (self.rng["exploration"], sigma), self.rng["env_reset"],
                    buffers=push_buffers, prey_buffer=self.prey_buffer,
                    frames=self.frames, component="population_noisy",
                )
            self.pop.fitness[i] = fit

        champ_idx = self.pop.champion_index()
        champion = self.pop.teams[champ_idx].clone()
        champ_fitness = self.pop.fitness[champ_idx]

        if self.use_pg and cfg.pg_episodes_per_gen > 0:
            rollout(
                self.env, self.pg.team, cfg.pg_episodes_per_gen,
                (self.rng["exploration"], sigma), self.rng["env_reset"],
                buffers=push_buffers, prey_buffer=self.prey_buffer,
                frames=self.frames, component="pg_exploration",
            )

        self.pop = next_generation(self.pop, self.mut_params, self.rng["evolution"], self.migration_log)

        if self.use_pg:
            self._pg_updates()
        self._prey_updates()

        if self.use_pg:
            migrate(self.pop, self.pg.team, self.migration_log)

        return {
            "generation": self.pop.generation,
            "champion_id": champ_idx,
            "champion_fitness": champ_fitness,
            "champion": champion,
        }

    def _pg_updates(self) -> None:
        cfg, hyper = self.config, self.hyper
        for _ in range(cfg.pg_updates_per_gen):
            for k in range(self.env_config.n_agents):
                if len(self.buffers[k]) == 0:
                    continue
                batch = self.buffers[k].sample(hyper.batch_size, self.rng["replay"])
                y = td3_target(self.critic, self.pg, k, batch, hyper, self.rng["smoothing"])
                critic_update(self.critic, [(batch[0], batch[1], y)])
                self.pg.critic_updates += 1
                if self.pg.critic_updates % hyper.policy_update_freq == 0:
                    actor_update(self.pg, self.critic, k, batch[0])
                    soft_update_targets(self.pg, self.critic, hyper.tau)

    def _prey_updates(self) -> None:
        if self.prey is None or self.prey_buffer is None or len(self.prey_buffer) == 0:
            return
        for _ in range(self.config.pg_updates_per_gen):
            self.prey.update(self.prey_buffer.sample(self.hyper.batch_size, self.rng["prey_replay"]))

    def evaluate_champion(self, team: TeamPolicy, champion_id: int, recorder=None) -> EvalReport:
        prey_actor = self.prey.pg.team.clone() if self.prey is not None else None
        return _evaluate_team(self.env_config, team, self.frames.total, champion_id, prey_actor, recorder)

    # ------------------------------------------------------------------
    def run_loop(self, writer: MetricsWriter, out_dir: Path | None = None) -> None:
        cfg = self.config
        t0 = time.perf_counter()
        traj_dir = None
        if out_dir is not None:
            traj_dir = Path(out_dir) / "trajectories"
            traj_dir.mkdir(parents=True, exist_ok=True)
        while self.frames.total < cfg.frames:
            info = self.run_generation()
            gen = info["generation"]
            if gen % cfg.eval_every == 0:
                recorder = TrajectoryRecorder() if traj_dir is not None else None
                report = self.evaluate_champion(info["champion"], info["champion_id"], recorder)
                rate = selection_rate(self.migration_log)
                writer.write(
                    frames=self.frames.total,
                    generation=gen,
                    champion_fitness=info["champion_fitness"],
                    eval_mean=report.mean,
                    eval_std=report.std,
                    selection_rate="" if rate is None else rate,
                    wall_time=time.perf_counter() - t0,
                )
                if recorder is not None:
                    recorder.write(traj_dir / f"eval_gen{gen:05d}.csv")
            if out_dir is not None and cfg.checkpoint_every and gen % cfg.checkpoint_every == 0:
                from .checkpoint import save_trainer

                save_trainer(Path(out_dir) / "checkpoint.bin", self)
        if out_dir is not None:
            self.migration_log.write_csv(Path(out_dir) / "migration.csv")


class CentralTrainer:
    """Single team with a centralized twin critic over joint state/action.

    algo="matd3" uses the full twin/smoothing/delay machinery, "maddpg" the
    single-critic variant, and "mixed" matd3 over the statically scalarized
    reward. The per-step team-reward signal is the increment of the episode
    team metric, so sparse tasks disburse exactly when the metric moves.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.env_config = config.env_config()
        self.hyper = config.hyper()
        self.env = make_env(self.env_config)
        seq = np.random.SeedSequence(config.seed)
        names = ["init", "env_reset", "exploration", "replay", "smoothing",
                 "prey_init", "prey_noise", "prey_replay"]
        self.rng = {name: RngStream(child) for name, child in zip(names, seq.spawn(8))}

        obs_dim, act_dim = self.env_config.obs_dim, self.env_config.action_dim
        n = self.env_config.n_agents
        self.learner = CentralLearner(
            obs_dim, act_dim, n, tuple(config.actor_hidden), tuple(config.critic_hidden),
            self.hyper, self.rng["init"], use_twin=config.algo != "maddpg",
        )
        self.joint_buffer = ReplayBuffer(config.buffer_capacity)
        self.frames = FrameCounter()
        self.episodes = 0
        self.local_scaler = MinMaxScaler()
        self.team_scaler = MinMaxScaler()

        self.prey: DdpgLearner | None = None
        self.prey_buffer: ReplayBuffer | None = None
        if isinstance(self.env, PredatorPreyEnv):
            self.prey = DdpgLearner(
                self.env_config.prey_obs_dim, act_dim, tuple(config.actor_hidden),
                self.hyper, self.rng["prey_init"],
            )
            self.prey_buffer = ReplayBuffer(config.buffer_capacity)
            sigma = config.exploration_noise
            self.env.set_prey_controller(
                lambda e, s: self.prey.act(e.observe_prey(s), (self.rng["prey_noise"], sigma))
            )

    def _step_reward(self, res: StepResult, prev_g: float) -> float:
        mode = self.config.reward_mode
        local = float(np.mean(res.local_rewards))
        team_inc = res.global_reward - prev_g
        if mode == "local":
            return local
        if mode == "global":
            return team_inc
        return mixed_reward(local, team_inc, self.config.mixed_weight, self.local_scaler, self.team_scaler)

    def collect_episode(self) -> None:
        sigma = self.config.exploration_noise
        state, jobs = self.env.reset(self.rng["env_reset"])
        done = False
        prev_g = 0.0
        while not done:
            ja = act_team(self.learner.pg.team, jobs, (self.rng["exploration"], sigma))
            res = self.env.step(state, ja)
            self.frames.add(1, "central_rollout")
            self.joint_buffer.push(
                Transition(
                    np.concatenate(jobs), np.concatenate(ja),
                    self._step_reward(res, prev_g), np.concatenate(res.joint_obs), res.done,
                )
            )
            if self.prey_buffer is not None and "prey_obs" in res.info:
                info = res.info
                self.prey_buffer.push(
                    Transition(info["prey_obs"], info["prey_action"], info["prey_reward"],
                               info["prey_next_obs"], res.done)
                )
            jobs = res.joint_obs
            prev_g = res.global_reward
            done = res.done
        self.episodes += 1

    def train_iteration(self) -> None:
        for _ in range(self.config.rollout_size):
            self.collect_episode()
        for _ in range(self.config.updates_per_iteration):
            if len(self.joint_buffer) == 0:
                break
            self.learner.update(
                self.joint_buffer.sample(self.hyper.batch_size, self.rng["replay"]),
                self.rng["smoothing"],
            )
            if self.prey is not None and len(self.prey_buffer) > 0:
                self.prey.update(self.prey_buffer.sample(self.hyper.batch_size, self.rng["prey_replay"]))

    def evaluate(self, recorder=None) -> EvalReport:
        prey_actor = self.prey.pg.team.clone() if self.prey is not None else None
        return _evaluate_team(
            self.env_config, self.learner.pg.team, self.frames.total, 0, prey_actor, recorder
        )

    def run_loop(self, writer: MetricsWriter, out_dir: Path | None = None) -> None:
        cfg = self.config
        t0 = time.perf_counter()
        traj_dir = None
        if out_dir is not None:
            traj_dir = Path(out_dir) / "trajectories"
            traj_dir.mkdir(parents=True, exist_ok=True)
        last_eval_episode = -1
        while self.frames.total < cfg.frames:
            self.train_iteration()
            if self.episodes // cfg.eval_every_episodes > last_eval_episode // cfg.eval_every_episodes:
                last_eval_episode = self.episodes
                recorder = TrajectoryRecorder() if traj_dir is not None else None
                report = self.evaluate(recorder)
                writer.write(
                    frames=self.frames.total,
                    generation=self.episodes,
                    champion_fitness="",
                    eval_mean=report.mean,
                    eval_std=report.std,
                    selection_rate="",
                    wall_time=time.perf_counter() - t0,
                )
                if recorder is not None:
                    recorder.write(traj_dir / f"eval_ep{self.episodes:06d}.csv")
            if out_dir is not None and cfg.checkpoint_every and self.episodes % cfg.checkpoint_every == 0:
                from .checkpoint import save_trainer

                save_trainer(Path(out_dir) / "checkpoint.bin", self)


def make_trainer(config: ExperimentConfig):
    if config.algo in ("merl", "ea"):
        return MerlTrainer(config)
    return CentralTrainer(config)


def run(config: ExperimentConfig, resume: str | Path | None = None) -> list[dict]:
    """Run one experiment to its frame budget; returns the metric rows.

    Writes metrics.csv, config.lock.json, migration.csv (hybrid mode), and
    per-evaluation trajectory CSVs under the configured output directory.
    """
    from .checkpoint import load_trainer
    from .config import write_lockfile

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_lockfile(config, out_dir)
    if resume is not None:
        trainer = load_trainer(Path(resume), config)
    else:
        trainer = make_trainer(config)
    writer = MetricsWriter(out_dir / "metrics.csv")
    trainer.run_loop(writer, out_dir)
    return writer.rows
