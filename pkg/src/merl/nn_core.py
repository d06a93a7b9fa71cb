"""Minimal MLP substrate: forward/backward, Adam, soft updates, seeded noise.

Everything runs in float64 numpy. Parameters live in flat vectors whose
layout is fixed per layer as [W (row-major), b], layer by layer from input
to output, so checkpoints and crossover cut points are stable across runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MlpSpec",
    "AdamState",
    "RngStream",
    "param_count",
    "init_params",
    "forward",
    "forward_batch",
    "forward_trace",
    "backward",
    "backward_batch",
    "backward_from_trace",
    "adam_step",
    "soft_update",
    "gaussian",
    "serialize_params",
    "deserialize_params",
]


@dataclass(frozen=True)
class MlpSpec:
    """Shape of a feed-forward net. Hidden activations are always tanh."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    output_activation: str = "tanh"  # "tanh" or "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if self.output_activation not in ("tanh", "linear"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, input to output."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


def param_count(spec: MlpSpec) -> int:
    return sum(fi * fo + fo for fi, fo in spec.layer_dims)


class RngStream:
    """Seeded random stream; identical seed gives identical draw sequence."""

    def __init__(self, seed, state: dict | None = None):
        self.seed = seed
        self.gen = np.random.Generator(np.random.PCG64(seed))
        if state is not None:
            self.gen.bit_generator.state = state

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state

    def normal(self, sigma: float, n: int) -> np.ndarray:
        return gaussian(self, sigma, n)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)


def gaussian(rng: RngStream, sigma: float, n: int) -> np.ndarray:
    """n i.i.d. draws from N(0, sigma^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return np.zeros(n, dtype=np.float64)
    return rng.gen.normal(0.0, sigma, n).astype(np.float64, copy=False)


def init_params(spec: MlpSpec, rng: RngStream) -> np.ndarray:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, biases included."""
    chunks = []
    for fan_in, fan_out in spec.layer_dims:
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.gen.uniform(-bound, bound, fan_in * fan_out + fan_out))
    return np.concatenate(chunks).astype(np.float64, copy=False)


def _split_layers(spec: MlpSpec, params: np.ndarray):
    """Yield (W, b) views per layer from the flat vector."""
    if params.shape != (param_count(spec),):
        raise ValueError(
            f"param vector length {params.shape} does not match spec ({param_count(spec)},)"
        )
    off = 0
    for fan_in, fan_out in spec.layer_dims:
        w = params[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = params[off : off + fan_out]
        off += fan_out
        yield w, b


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({spec.input_dim},)")
    return forward_batch(spec, params, x[None, :])[0]


def forward_batch(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on a (batch, input_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"batch input shape {x.shape} incompatible with input_dim {spec.input_dim}")
    layers = list(_split_layers(spec, params))
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        last = i == len(layers) - 1
        if not last or spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def forward_trace(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass keeping post-activation values per layer (for backprop).

    Returns (layers, acts); acts[-1] is the output batch.
    """
    return _forward_trace(spec, params, x)


def _forward_trace(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass keeping post-activation values per layer (for backprop)."""
    layers = list(_split_layers(spec, params))
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        last = i == len(layers) - 1
        if not last or spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    return layers, acts


def backward(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of upstream . output w.r.t. params and input, single sample."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({spec.input_dim},)")
    if upstream.shape != (spec.output_dim,):
        raise ValueError(f"upstream shape {upstream.shape} != ({spec.output_dim},)")
    pg, xg = backward_batch(spec, params, x[None, :], upstream[None, :])
    return pg, xg[0]


def backward_batch(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched backprop; contributions are summed over the batch.

    Returns (param_grad, input_grad) where param_grad is flat like params
    and input_grad has the shape of x.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 2 or upstream.ndim != 2 or x.shape[0] != upstream.shape[0]:
        raise ValueError("x and upstream must be aligned 2-D batches")
    if upstream.shape[1] != spec.output_dim:
        raise ValueError(f"upstream width {upstream.shape[1]} != output_dim {spec.output_dim}")
    layers, acts = _forward_trace(spec, params, x)
    return backward_from_trace(spec, params, layers, acts, upstream)


def backward_from_trace(
    spec: MlpSpec, params: np.ndarray, layers, acts, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backprop reusing a forward trace; avoids re-running the forward pass."""
    grad = np.zeros_like(params)
    # offsets of each layer's slice inside the flat vector
    offs = []
    off = 0
    for fan_in, fan_out in spec.layer_dims:
        offs.append(off)
        off += fan_in * fan_out + fan_out

    delta = upstream
    if spec.output_activation == "tanh":
        delta = delta * (1.0 - acts[-1] ** 2)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        fan_in, fan_out = spec.layer_dims[i]
        o = offs[i]
        grad[o : o + fan_in * fan_out] = (delta.T @ acts[i]).ravel()
        grad[o + fan_in * fan_out : o + fan_in * fan_out + fan_out] = delta.sum(axis=0)
        delta = delta @ w
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    return grad, delta


@dataclass
class AdamState:
    """Adam moments and step counter for one flat parameter vector."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, n: int, lr: float) -> "AdamState":
        return cls(lr=lr, m=np.zeros(n, dtype=np.float64), v=np.zeros(n, dtype=np.float64))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam step; mutates state, returns updated params."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.m.shape:
        raise ValueError("param/grad/state length mismatch")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def soft_update(target: np.ndarray, source: np.ndarray, tau: float) -> np.ndarray:
    """Exponential-moving-average blend: tau*source + (1-tau)*target."""
    if target.shape != source.shape:
        raise ValueError("target/source length mismatch")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return tau * source + (1.0 - tau) * target


def serialize_params(params: np.ndarray) -> bytes:
    """Little-endian float64 payload preceded by a u64 length header."""
    arr = np.ascontiguousarray(params, dtype="<f8")
    return struct.pack("<Q", arr.size) + arr.tobytes()


def deserialize_params(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Inverse of serialize_params; returns (vector, next_offset)."""
    (n,) = struct.unpack_from("<Q", blob, offset)
    start = offset + 8
    end = start + 8 * n
    if end > len(blob):
        raise ValueError("truncated parameter block")
    vec = np.frombuffer(blob[start:end], dtype="<f8").astype(np.float64)
    return vec, end
