"""Experiment configuration: task/algorithm defaults, INI config files,
flag overrides, and a provenance lockfile that makes runs reproducible.

Defaults follow the published per-task hyperparameter tables: cooperative
navigation and predator-prey share one set (gamma 0.95, buffer 1e6, batch
1024, lr 0.01, tau 0.01), the rover domain another (gamma 0.5 for the
hybrid, 0.97 for the centralized baseline, buffer 1e5, batch 512, lr 5e-5/
1e-5, tau 1e-5, rollout size 50).
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from .envs import EnvConfig
from .evolution import MutationParams
from .pg_learners import Td3Hyper

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "write_lockfile"]

ALGOS = ("merl", "ea", "matd3", "maddpg", "mixed")
REWARD_MODES = ("local", "global", "mixed")


class ConfigError(ValueError):
    pass


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.replace(",", " ").split())


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(x) for x in raw.replace(",", " ").split())


def _bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    val = str(raw).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {raw!r}")


# key -> (section, converter). Defaults are resolved per task/algo below.
_SCHEMA = {
    "algo": ("run", str),
    "task": ("run", str),
    "frames": ("run", int),
    "seed": ("run", int),
    "out": ("run", str),
    "eval_every": ("run", int),
    "checkpoint_every": ("run", int),
    "n_agents": ("env", int),
    "n_pois": ("env", int),
    "coupling": ("env", int),
    "prey_speed_factor": ("env", float),
    "ep_len": ("env", int),
    "world_size": ("env", float),
    "obs_radius": ("env", float),
    "dt": ("env", float),
    "damping": ("env", float),
    "accel_gain": ("env", float),
    "max_speed": ("env", float),
    "agent_radius": ("env", float),
    "poi_radius": ("env", float),
    "landmark_radius": ("env", float),
    "prey_radius": ("env", float),
    "collision_penalty": ("env", float),
    "d_floor": ("env", float),
    "fuel": ("env", _floats),
    "fixed_agent_pos": ("env", _floats),
    "fixed_poi_pos": ("env", _floats),
    "actor_hidden": ("nets", _ints),
    "critic_hidden": ("nets", _ints),
    "gamma": ("td3", float),
    "tau": ("td3", float),
    "actor_lr": ("td3", float),
    "critic_lr": ("td3", float),
    "policy_noise": ("td3", float),
    "noise_clip": ("td3", float),
    "policy_update_freq": ("td3", int),
    "batch_size": ("td3", int),
    "exploration_noise": ("td3", float),
    "buffer_capacity": ("td3", lambda s: int(float(s))),
    "pg_updates_per_gen": ("td3", int),
    "pg_episodes_per_gen": ("td3", int),
    "strict_bootstrap": ("td3", _bool),
    "pop_size": ("evolution", int),
    "n_elites": ("evolution", int),
    "rollouts_per_fitness": ("evolution", int),
    "mut_prob": ("evolution", float),
    "mut_frac": ("evolution", float),
    "mut_strength": ("evolution", float),
    "supermut_prob": ("evolution", float),
    "resetmut_prob": ("evolution", float),
    "super_mut_scale": ("evolution", float),
    "rollout_size": ("baseline", int),
    "reward_mode": ("baseline", str),
    "mixed_weight": ("baseline", float),
    "updates_per_iteration": ("baseline", int),
    "eval_every_episodes": ("baseline", int),
}

_ENV_KEYS = [k for k, (sec, _) in _SCHEMA.items() if sec == "env"]


def _defaults(task: str, algo: str) -> dict:
    rover = task == "rover"
    central = algo in ("matd3", "maddpg", "mixed")
    d = {
        "algo": algo,
        "task": task,
        "frames": 100_000,
        "seed": 0,
        "out": "runs/latest",
        "eval_every": 1,
        "checkpoint_every": 0,
        "n_agents": 3,
        "n_pois": 4 if rover else (2 if task == "predator_prey" else 3),
        "coupling": 1,
        "prey_speed_factor": 1.3,
        "ep_len": 70 if rover else 50,
        "world_size": 1.0,
        "obs_radius": None,
        "dt": 0.1,
        "damping": 0.75,
        "accel_gain": 0.5,
        "max_speed": 1.0,
        "agent_radius": 0.1,
        "poi_radius": 0.05,
        "landmark_radius": 0.2,
        "prey_radius": 0.05,
        "collision_penalty": 1.0,
        "d_floor": 0.05,
        "fuel": None,
        "fixed_agent_pos": None,
        "fixed_poi_pos": None,
        "actor_hidden": (100, 100),
        "critic_hidden": (300, 300) if central else (100, 100),
        "gamma": (0.97 if central else 0.5) if rover else 0.95,
        "tau": 1e-5 if rover else 0.01,
        "actor_lr": 5e-5 if rover else 0.01,
        "critic_lr": 1e-5 if rover else 0.01,
        "policy_noise": 0.2,
        "noise_clip": 0.5,
        "policy_update_freq": 2,
        "batch_size": 512 if rover else 1024,
        "exploration_noise": 0.4,
        "buffer_capacity": 100_000 if rover else 1_000_000,
        "pg_updates_per_gen": 1,
        "pg_episodes_per_gen": 1,
        "strict_bootstrap": False,
        "pop_size": 10,
        "n_elites": 4,
        "rollouts_per_fitness": 10,
        "mut_prob": 0.9,
        "mut_frac": 0.1,
        "mut_strength": 0.1,
        "supermut_prob": 0.05,
        "resetmut_prob": 0.05,
        "super_mut_scale": 10.0,
        "rollout_size": 50 if rover else 10,
        "reward_mode": "mixed" if algo == "mixed" else "local",
        "mixed_weight": 10.0,
        "updates_per_iteration": 100,
        "eval_every_episodes": 10,
    }
    return d


@dataclass
class ExperimentConfig:
    values: dict
    provenance: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def env_config(self) -> EnvConfig:
        v = self.values
        return EnvConfig(
            task=v["task"],
            n_agents=v["n_agents"],
            n_pois=v["n_pois"],
            coupling=v["coupling"],
            prey_speed_factor=v["prey_speed_factor"],
            obs_radius=v["obs_radius"],
            world_size=v["world_size"],
            ep_len=v["ep_len"],
            dt=v["dt"],
            damping=v["damping"],
            accel_gain=v["accel_gain"],
            max_speed=v["max_speed"],
            agent_radius=v["agent_radius"],
            poi_radius=v["poi_radius"],
            landmark_radius=v["landmark_radius"],
            prey_radius=v["prey_radius"],
            collision_penalty=v["collision_penalty"],
            d_floor=v["d_floor"],
            fixed_agent_pos=v["fixed_agent_pos"],
            fixed_poi_pos=v["fixed_poi_pos"],
            fuel=v["fuel"],
        )

    def hyper(self) -> Td3Hyper:
        v = self.values
        return Td3Hyper(
            gamma=v["gamma"],
            tau=v["tau"],
            actor_lr=v["actor_lr"],
            critic_lr=v["critic_lr"],
            policy_noise=v["policy_noise"],
            noise_clip=v["noise_clip"],
            policy_update_freq=v["policy_update_freq"],
            batch_size=v["batch_size"],
            mask_terminal_bootstrap=not v["strict_bootstrap"],
        )

    def mutation(self) -> MutationParams:
        v = self.values
        return MutationParams(
            mut_prob=v["mut_prob"],
            mut_frac=v["mut_frac"],
            mut_strength=v["mut_strength"],
            supermut_prob=v["supermut_prob"],
            resetmut_prob=v["resetmut_prob"],
            super_mut_scale=v["super_mut_scale"],
        )


def _read_file(path: Path) -> dict:
    """Raw key -> string (or json value) pairs from an INI config or a
    JSON lockfile."""
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        resolved = dict(doc.get("resolved", doc))
        # keys at their task defaults keep "default" provenance on re-runs,
        # so inert knobs do not trip task-consistency validation
        base = _defaults(resolved.get("task", "coop_nav"), resolved.get("algo", "merl"))
        out = {}
        for key, val in resolved.items():
            norm = tuple(val) if isinstance(val, list) else val
            if key in ("task", "algo") or base.get(key) != norm:
                out[key] = norm
        return out
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    raw = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            if key not in _SCHEMA:
                raise ConfigError(f"unknown config key [{section}] {key}")
            expected_section = _SCHEMA[key][0]
            if section != expected_section:
                raise ConfigError(f"key {key!r} belongs in section [{expected_section}], found in [{section}]")
            raw[key] = val
    return raw


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve defaults, config file, and flag overrides, in that order.

    Every value's provenance (default / file / flag) is recorded so the
    lockfile can echo where each setting came from.
    """
    file_raw = _read_file(Path(path)) if path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in overrides:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")

    def pick(key):
        if key in overrides:
            return overrides[key], "flag"
        if key in file_raw:
            return file_raw[key], "file"
        return None, "default"

    task, task_src = pick("task")
    if task is None:
        raise ConfigError("config must specify a task")
    algo, algo_src = pick("algo")
    algo = algo or "merl"
    if task not in ("coop_nav", "rover", "predator_prey"):
        raise ConfigError(f"unknown task {task!r}")
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}, expected one of {ALGOS}")

    values = _defaults(task, algo)
    provenance = {k: "default" for k in values}
    provenance["task"] = task_src
    provenance["algo"] = algo_src

    for source_name, source in (("file", file_raw), ("flag", overrides)):
        for key, raw in source.items():
            if key in ("task", "algo"):
                continue
            conv = _SCHEMA[key][1]
            if isinstance(raw, str):
                values[key] = conv(raw)
            elif isinstance(raw, (list, tuple)):
                values[key] = tuple(raw)
            else:
                values[key] = raw
            provenance[key] = source_name

    _validate(values, provenance)
    return ExperimentConfig(values=values, provenance=provenance)


def _validate(values: dict, provenance: dict) -> None:
    task = values["task"]
    if task != "rover":
        if provenance["coupling"] != "default":
            raise ConfigError("coupling is only valid for the rover task")
        if provenance.get("fuel", "default") != "default":
            raise ConfigError("fuel budgets are only valid for the rover task")
    if task != "predator_prey" and provenance["prey_speed_factor"] != "default":
        raise ConfigError("prey_speed_factor is only valid for predator_prey")
    if not 1 <= values["coupling"] <= 7:
        raise ConfigError(f"coupling must be in [1, 7], got {values['coupling']}")
    if values["reward_mode"] not in REWARD_MODES:
        raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
    if values["algo"] == "mixed" and values["reward_mode"] != "mixed":
        raise ConfigError("algo 'mixed' requires reward_mode 'mixed'")
    if values["n_elites"] > values["pop_size"]:
        raise ConfigError("n_elites cannot exceed pop_size")
    for key in ("frames", "pop_size", "rollouts_per_fitness", "batch_size", "buffer_capacity"):
        if values[key] < 0:
            raise ConfigError(f"{key} must be non-negative")
    if len(values["actor_hidden"]) < 1:
        raise ConfigError("actor_hidden needs at least one layer (the shared trunk)")
    # instantiating EnvConfig runs the environment-side validation
    ExperimentConfig(values=dict(values)).env_config()


def write_lockfile(config: ExperimentConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.lock.json"
    doc = {"resolved": config.values, "provenance": config.provenance}
    path.write_text(json.dumps(doc, indent=2, default=list) + "\n")
    return path
