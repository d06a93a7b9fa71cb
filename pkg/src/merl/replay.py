"""Per-agent cyclic replay buffer with uniform minibatch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import RngStream

__all__ = ["Transition", "ReplayBuffer", "BufferEmptyError"]


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    local_reward: float
    next_state: np.ndarray
    done: bool


class BufferEmptyError(RuntimeError):
    """Sampling requested before any transition was stored."""


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entries are overwritten.

    Storage is allocated lazily on the first push, when the state/action
    dimensions become known.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.size = 0
        self.cursor = 0
        self._states = None
        self._actions = None
        self._rewards = None
        self._next_states = None
        self._dones = None

    def _alloc(self, state_dim: int, action_dim: int) -> None:
        c = self.capacity
        self._states = np.empty((c, state_dim), np.float64)
        self._actions = np.empty((c, action_dim), np.float64)
        self._rewards = np.empty(c, np.float64)
        self._next_states = np.empty((c, state_dim), np.float64)
        self._dones = np.empty(c, np.float64)

    def push(self, tr: Transition) -> None:
        s = np.asarray(tr.state, np.float64)
        a = np.asarray(tr.action, np.float64)
        s2 = np.asarray(tr.next_state, np.float64)
        if self._states is None:
            self._alloc(s.size, a.size)
        if s.shape != (self._states.shape[1],) or a.shape != (self._actions.shape[1],):
            raise ValueError("transition dims do not match buffer contents")
        if s2.shape != s.shape:
            raise ValueError("next_state dim does not match state dim")
        i = self.cursor
        self._states[i] = s
        self._actions[i] = a
        self._rewards[i] = tr.local_reward
        self._next_states[i] = s2
        self._dones[i] = 1.0 if tr.done else 0.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def sample(self, batch: int, rng: RngStream):
        """batch uniform draws with replacement; raises when empty."""
        if self.size == 0:
            raise BufferEmptyError("replay buffer has no transitions yet")
        idx = rng.integers(0, self.size, size=batch)
        return (
            self._states[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_states[idx],
            self._dones[idx],
        )

    def contents(self):
        """All stored transitions as arrays, oldest-first order not guaranteed."""
        if self.size == 0:
            raise BufferEmptyError("replay buffer has no transitions yet")
        sl = slice(0, self.size)
        return (
            self._states[sl],
            self._actions[sl],
            self._rewards[sl],
            self._next_states[sl],
            self._dones[sl],
        )
