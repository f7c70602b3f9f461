"""Named parameter storage, initialization, Adam, and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NonFiniteError, ShapeError
from .tensor import Tensor


@dataclass
class ParamEntry:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self._leaf = Tensor._param_leaf(self.value, self.grad)

    @property
    def tensor(self) -> Tensor:
        return self._leaf


class ParamStore:
    """All learnable arrays of one model, keyed by stable dotted names.

    Indexing a store returns the parameter as a leaf ``Tensor`` whose data
    and gradient buffers are the entry's own arrays, so a backward pass
    writes straight into ``entries[name].grad`` and optimizer updates are
    visible to the next forward pass without copying.
    """

    def __init__(self, seed: int = 0):
        self.entries: dict[str, ParamEntry] = {}
        self.step_count = 0
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name) -> Tensor:
        return self.entries[name].tensor

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def names(self):
        return list(self.entries)

    def add(self, name: str, value) -> Tensor:
        if name in self.entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"initial value of {name!r} is not finite")
        self.entries[name] = ParamEntry(value)
        return self.entries[name].tensor

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def value(self, name) -> np.ndarray:
        return self.entries[name].value

    def set_value(self, name, value) -> None:
        entry = self.entries[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != entry.value.shape:
            raise ShapeError(f"{name}: shape {value.shape} != {entry.value.shape}")
        entry.value[...] = value

    def zero_grad(self) -> None:
        for e in self.entries.values():
            e.grad[...] = 0.0

    def n_params(self) -> int:
        return sum(e.value.size for e in self.entries.values())

    def grad_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(e.grad * e.grad)) for e in self.entries.values()))

    def clip_grad_norm(self, max_norm: float) -> float:
        """Rescale all gradients so their global L2 norm is at most ``max_norm``.

        Returns the norm before clipping.
        """
        norm = self.grad_norm()
        if norm > max_norm > 0:
            scale = max_norm / norm
            for e in self.entries.values():
                e.grad *= scale
        return norm

    def snapshot(self) -> dict:
        return {k: e.value.copy() for k, e in self.entries.items()}

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for k, e in self.entries.items():
            other.add(k, e.value)
        other.step_count = self.step_count
        return other

    # -- checkpoint format --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "params": {
                k: {"shape": list(e.value.shape), "values": e.value.reshape(-1).tolist()}
                for k, e in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParamStore":
        store = cls()
        for name, item in doc["params"].items():
            shape = tuple(item["shape"])
            values = np.asarray(item["values"], dtype=np.float64)
            if values.size != int(np.prod(shape, dtype=np.int64)):
                raise ShapeError(f"{name}: {values.size} values for shape {shape}")
            store.add(name, values.reshape(shape))
        store.step_count = int(doc.get("step_count", 0))
        return store

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips float64 exactly
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ParamStore":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def adam_update(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam step over every entry, then zero the gradients.

    Entries whose gradient is identically zero are left untouched (value and
    moments), so a zero-gradient step is exactly the identity.
    """
    for name, e in store.entries.items():
        if not np.all(np.isfinite(e.grad)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for e in store.entries.values():
        g = e.grad
        if not g.any():
            continue
        e.adam_m *= beta1
        e.adam_m += (1.0 - beta1) * g
        e.adam_v *= beta2
        e.adam_v += (1.0 - beta2) * g * g
        e.value -= lr * (e.adam_m / c1) / (np.sqrt(e.adam_v / c2) + eps)
    store.zero_grad()


def mlp_forward(x, layer_params, activation: str = "tanh") -> Tensor:
    """Affine layers ``x @ W + b`` with ``activation`` between them (not after the last)."""
    if not layer_params:
        raise ConfigError("mlp_forward needs at least one layer")
    act = _ACTIVATIONS.get(activation)
    if act is None:
        raise ConfigError(f"unknown activation {activation!r}")
    h = x
    last = len(layer_params) - 1
    for i, (w, b) in enumerate(layer_params):
        if h.shape[-1] != w.shape[0]:
            raise ShapeError(f"MLP layer {i}: input {h.shape} incompatible with weight {w.shape}")
        h = h @ w + b
        if i < last:
            h = act(h)
    return h


def _identity(h):
    return h


_ACTIVATIONS = {
    "tanh": lambda h: h.tanh(),
    "relu": lambda h: h.relu(),
    "identity": _identity,
}


def init_mlp(store: ParamStore, prefix: str, sizes) -> list:
    """Register Xavier weights and zero biases for an MLP with the given layer sizes."""
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = store.xavier(f"{prefix}.{i}.W", n_in, n_out)
        b = store.zeros(f"{prefix}.{i}.b", (n_out,))
        layers.append((w, b))
    return layers


def mlp_params(store: ParamStore, prefix: str) -> list:
    layers = []
    i = 0
    while f"{prefix}.{i}.W" in store:
        layers.append((store[f"{prefix}.{i}.W"], store[f"{prefix}.{i}.b"]))
        i += 1
    return layers
