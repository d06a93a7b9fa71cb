"""Checkpointing: full trainer state in one binary file.

Layout: 8-byte magic, u64 header length, JSON header, then one
length-prefixed little-endian float64 block per named array (parameters,
Adam moments, replay contents). The header carries counters, fitness,
migration history, RNG states, and the blob manifest, so a restored run
continues the metric stream bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn_core import deserialize_params, serialize_params
from .policy import flatten, unflatten
from .replay import ReplayBuffer

__all__ = ["save_state", "load_state", "save_trainer", "load_trainer"]

MAGIC = b"MERLCKP1"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def save_state(path: Path, header: dict, blobs: dict[str, np.ndarray]) -> None:
    manifest = [{"name": k, "shape": list(np.shape(v))} for k, v in blobs.items()]
    doc = dict(header)
    doc["_blobs"] = manifest
    encoded = json.dumps(doc, default=_json_default).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for v in blobs.values():
            fh.write(serialize_params(np.asarray(v, np.float64).ravel()))


def load_state(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16 : 16 + hlen].decode())
    blobs = {}
    offset = 16 + hlen
    for entry in header.pop("_blobs"):
        vec, offset = deserialize_params(blob, offset)
        blobs[entry["name"]] = vec.reshape(entry["shape"])
    return header, blobs


# ---------------------------------------------------------------------------
# trainer state <-> (header, blobs)
# ---------------------------------------------------------------------------


def _adam_out(prefix, state, header, blobs):
    header[f"{prefix}_t"] = state.t
    blobs[f"{prefix}_m"] = state.m
    blobs[f"{prefix}_v"] = state.v


def _adam_in(prefix, state, header, blobs):
    state.t = header[f"{prefix}_t"]
    state.m = blobs[f"{prefix}_m"]
    state.v = blobs[f"{prefix}_v"]


def _pg_out(prefix, pg, header, blobs):
    blobs[f"{prefix}_team"] = flatten(pg.team)
    blobs[f"{prefix}_target"] = flatten(pg.target)
    header[f"{prefix}_critic_updates"] = pg.critic_updates
    header[f"{prefix}_actor_updates"] = pg.actor_updates
    _adam_out(f"{prefix}_trunk", pg.trunk_adam, header, blobs)
    for k, st in enumerate(pg.head_adams):
        _adam_out(f"{prefix}_head{k}", st, header, blobs)


def _pg_in(prefix, pg, header, blobs):
    pg.team = unflatten(pg.team, blobs[f"{prefix}_team"])
    pg.target = unflatten(pg.target, blobs[f"{prefix}_target"])
    pg.critic_updates = header[f"{prefix}_critic_updates"]
    pg.actor_updates = header[f"{prefix}_actor_updates"]
    _adam_in(f"{prefix}_trunk", pg.trunk_adam, header, blobs)
    for k, st in enumerate(pg.head_adams):
        _adam_in(f"{prefix}_head{k}", st, header, blobs)


def _critic_out(prefix, critic, header, blobs):
    for name in ("q1", "q2", "q1_target", "q2_target"):
        blobs[f"{prefix}_{name}"] = getattr(critic, name)
    _adam_out(f"{prefix}_adam", critic.adam, header, blobs)


def _critic_in(prefix, critic, header, blobs):
    for name in ("q1", "q2", "q1_target", "q2_target"):
        setattr(critic, name, blobs[f"{prefix}_{name}"])
    _adam_in(f"{prefix}_adam", critic.adam, header, blobs)


def _buffer_out(prefix, buf: ReplayBuffer, header, blobs):
    header[f"{prefix}_meta"] = {"size": buf.size, "cursor": buf.cursor}
    if buf.size:
        s, a, r, s2, d = buf.contents()
        blobs[f"{prefix}_states"] = s.copy()
        blobs[f"{prefix}_actions"] = a.copy()
        blobs[f"{prefix}_rewards"] = r.copy()
        blobs[f"{prefix}_next_states"] = s2.copy()
        blobs[f"{prefix}_dones"] = d.copy()


def _buffer_in(prefix, buf: ReplayBuffer, header, blobs):
    meta = header[f"{prefix}_meta"]
    if meta["size"] == 0:
        return
    s = blobs[f"{prefix}_states"]
    a = blobs[f"{prefix}_actions"]
    buf._alloc(s.shape[1], a.shape[1])
    n = meta["size"]
    buf._states[:n] = s
    buf._actions[:n] = a
    buf._rewards[:n] = blobs[f"{prefix}_rewards"]
    buf._next_states[:n] = blobs[f"{prefix}_next_states"]
    buf._dones[:n] = blobs[f"{prefix}_dones"]
    buf.size = n
    buf.cursor = meta["cursor"]


def _prey_out(trainer, header, blobs):
    if trainer.prey is None:
        return
    _pg_out("prey_pg", trainer.prey.pg, header, blobs)
    _critic_out("prey_critic", trainer.prey.critic, header, blobs)
    _buffer_out("prey_buf", trainer.prey_buffer, header, blobs)


def _prey_in(trainer, header, blobs):
    if trainer.prey is None:
        return
    _pg_in("prey_pg", trainer.prey.pg, header, blobs)
    _critic_in("prey_critic", trainer.prey.critic, header, blobs)
    _buffer_in("prey_buf", trainer.prey_buffer, header, blobs)


def save_trainer(path: Path, trainer) -> None:
    from .trainer import CentralTrainer, MerlTrainer

    header: dict = {
        "frames_total": trainer.frames.total,
        "frames_by_component": trainer.frames.by_component,
        "rng": {name: stream.get_state() for name, stream in trainer.rng.items()},
    }
    blobs: dict[str, np.ndarray] = {}
    if isinstance(trainer, MerlTrainer):
        header["kind"] = "merl"
        header["generation"] = trainer.pop.generation
        header["fitness"] = trainer.pop.fitness
        header["migration"] = trainer.migration_log.entries
        for i, team in enumerate(trainer.pop.teams):
            blobs[f"pop{i}"] = flatten(team)
        _pg_out("pg", trainer.pg, header, blobs)
        _critic_out("critic", trainer.critic, header, blobs)
        for k, buf in enumerate(trainer.buffers):
            _buffer_out(f"buf{k}", buf, header, blobs)
        _prey_out(trainer, header, blobs)
    elif isinstance(trainer, CentralTrainer):
        header["kind"] = "central"
        header["episodes"] = trainer.episodes
        header["scalers"] = {
            "local": [trainer.local_scaler.lo, trainer.local_scaler.hi],
            "team": [trainer.team_scaler.lo, trainer.team_scaler.hi],
        }
        _pg_out("pg", trainer.learner.pg, header, blobs)
        _critic_out("critic", trainer.learner.critic, header, blobs)
        _buffer_out("joint_buf", trainer.joint_buffer, header, blobs)
        _prey_out(trainer, header, blobs)
    else:
        raise TypeError(f"cannot checkpoint {type(trainer)!r}")
    save_state(path, header, blobs)


def load_trainer(path: Path, config):
    """Rebuild a trainer from its config, then restore the saved state."""
    from .trainer import make_trainer

    header, blobs = load_state(path)
    trainer = make_trainer(config)
    expected = "merl" if config.algo in ("merl", "ea") else "central"
    if header["kind"] != expected:
        raise ValueError(f"checkpoint kind {header['kind']!r} does not match algo {config.algo!r}")
    trainer.frames.total = header["frames_total"]
    trainer.frames.by_component = dict(header["frames_by_component"])
    for name, stream in trainer.rng.items():
        stream.set_state(header["rng"][name])
    if header["kind"] == "merl":
        trainer.pop.generation = header["generation"]
        trainer.pop.fitness = header["fitness"]
        trainer.pop.teams = [unflatten(trainer.pop.teams[i], blobs[f"pop{i}"]) for i in range(trainer.pop.size)]
        trainer.migration_log.entries = header["migration"]
        _pg_in("pg", trainer.pg, header, blobs)
        _critic_in("critic", trainer.critic, header, blobs)
        for k, buf in enumerate(trainer.buffers):
            _buffer_in(f"buf{k}", buf, header, blobs)
        _prey_in(trainer, header, blobs)
    else:
        trainer.episodes = header["episodes"]
        trainer.local_scaler.lo, trainer.local_scaler.hi = header["scalers"]["local"]
        trainer.team_scaler.lo, trainer.team_scaler.hi = header["scalers"]["team"]
        _pg_in("pg", trainer.learner.pg, header, blobs)
        _critic_in("critic", trainer.learner.critic, header, blobs)
        _buffer_in("joint_buf", trainer.joint_buffer, header, blobs)
        _prey_in(trainer, header, blobs)
    return trainer
