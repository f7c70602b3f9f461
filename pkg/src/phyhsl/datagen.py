"""Synthetic ground truth: Watts-Strogatz graphs and networked dynamics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonFiniteError
from .temporal_graph import StaticGraph

DEFAULT_PARAMS = {
    "heat": {"kappa": 0.5},
    "sis": {"beta": 0.5, "delta": 0.3},
    "mutualistic": {"b": 0.1, "a": 0.2, "c": 3.0},
}
# range of the uniform initial condition per kind
INITIAL_RANGE = {"heat": (0.0, 1.0), "sis": (0.0, 1.0), "mutualistic": (0.0, 3.0)}
GT_SUBSTEPS = 20
BLOWUP = 1e6


@dataclass
class DynamicsSpec:
    kind: str = "heat"
    params: dict = field(default_factory=dict)
    t_end: float = 9.75
    n_samples: int = 40
    noise_std: float = 0.01
    seed: int = 0
    d_in: int = 1

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown dynamics kind {self.kind!r}; choose from {sorted(DEFAULT_PARAMS)}")
        merged = dict(DEFAULT_PARAMS[self.kind])
        extra = set(self.params) - set(merged)
        if extra:
            raise ConfigError(f"unknown {self.kind} parameter(s): {sorted(extra)}")
        merged.update({k: float(v) for k, v in self.params.items()})
        self.params = merged
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.t_end <= 0:
            raise ConfigError(f"t_end must be > 0, got {self.t_end}")
        if self.d_in < 1:
            raise ConfigError(f"d_in must be >= 1, got {self.d_in}")

    @property
    def dt(self) -> float:
        return self.t_end / (self.n_samples - 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StateSeries:
    values: np.ndarray      # (N, T, D)
    dt: float = 1.0

    @property
    def shape(self):
        return self.values.shape


def watts_strogatz(n: int, k: int, p: float, seed: int = 0) -> StaticGraph:
    """Ring lattice with ``k`` neighbors per node, each lattice edge rewired with probability ``p``.

    Rewiring moves the far endpoint to a uniformly chosen node that is
    neither the source nor already adjacent to it, so the edge count stays
    ``n * k / 2``.
    """
    if k % 2 or k < 2 or k >= n:
        raise ConfigError(f"watts_strogatz needs an even k with 2 <= k < n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"rewiring probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if v not in adj[u] or rng.random() >= p or len(adj[u]) >= n - 1:
                continue
            while True:
                w = int(rng.integers(n))
                if w != u and w not in adj[u]:
                    break
            adj[u].remove(v)
            adj[v].remove(u)
            adj[u].add(w)
            adj[w].add(u)
    edges = tuple((u, v, 1.0) for u in range(n) for v in sorted(adj[u]) if u < v)
    return StaticGraph(n, edges)


def vector_field(g: StaticGraph, kind: str, params: dict):
    """Right-hand side ``f(x)`` for ``x`` of shape ``(N, D)``."""
    src, dst, w = g.arcs()
    w = w[:, None]
    n = g.n_nodes

    def scatter(vals):
        out = np.zeros((n,) + vals.shape[1:])
        np.add.at(out, dst, vals)
        return out

    if kind == "heat":
        kappa = params["kappa"]
        return lambda x: kappa * scatter(w * (x[src] - x[dst]))
    if kind == "sis":
        beta, delta = params["beta"], params["delta"]
        return lambda x: -delta * x + beta * (1.0 - x) * scatter(w * x[src])
    if kind == "mutualistic":
        b, a, c = params["b"], params["a"], params["c"]

        def f(x):
            xi, xj = x[dst], x[src]
            coupling = scatter(w * xi * xj / (1.0 + xi + xj))
            return b + x * (1.0 - x / c) * (x / a - 1.0) + coupling
        return f
    raise ConfigError(f"unknown dynamics kind {kind!r}")


def integrate(f, x0: np.ndarray, dt: float, n_samples: int, substeps: int = GT_SUBSTEPS, label: str = "dynamics"):
    """RK4 with ``substeps`` steps per sample interval; returns ``(n_samples, ...)``."""
    h = dt / substeps
    x = np.array(x0, dtype=np.float64)
    out = [x.copy()]
    for s in range(1, n_samples):
        for _ in range(substeps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
            raise NonFiniteError(f"{label} state blew up at t={s * dt:g}")
        out.append(x.copy())
    return np.stack(out)


def simulate(g: StaticGraph, spec: DynamicsSpec, x0=None) -> StateSeries:
    rng = np.random.default_rng(spec.seed)
    if x0 is None:
        lo, hi = INITIAL_RANGE[spec.kind]
        x0 = rng.uniform(lo, hi, size=(g.n_nodes, spec.d_in))
    else:
        x0 = np.asarray(x0, dtype=np.float64).reshape(g.n_nodes, -1)
    traj = integrate(vector_field(g, spec.kind, spec.params), x0, spec.dt, spec.n_samples, label=spec.kind)
    values = np.ascontiguousarray(traj.transpose(1, 0, 2))
    if spec.noise_std > 0:
        values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    return StateSeries(values, spec.dt)


# -- files ----------------------------------------------------------------------

def _value_columns(d: int) -> list:
    return ["value"] if d == 1 else [f"value{k}" for k in range(d)]


def export_dataset(series: StateSeries, g: StaticGraph, directory, spec: DynamicsSpec | None = None,
                   extra: dict | None = None) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        g.to_csv(directory / "edges.csv")
        n, T, d = series.values.shape
        with open(directory / "states.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["node", "t"] + _value_columns(d))
            for i in range(n):
                for t in range(T):
                    writer.writerow([i, t] + [repr(float(v)) for v in series.values[i, t]])
        meta = {"n_nodes": n, "n_steps": T, "d_in": d, "dt": series.dt, "n_edges": g.n_edges}
        if spec is not None:
            meta["spec"] = spec.to_dict()
            meta["seed"] = spec.seed
        if extra:
            meta.update(extra)
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {directory}: {exc}") from exc
    return directory


def load_dataset(directory):
    """Inverse of :func:`export_dataset`; returns ``(graph, series, meta)``."""
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
        g = StaticGraph.from_csv(directory / "edges.csv", n_nodes=meta["n_nodes"])
        n, T, d = meta["n_nodes"], meta["n_steps"], meta["d_in"]
        values = np.full((n, T, d), np.nan)
        cols = _value_columns(d)
        with open(directory / "states.csv", newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["node", "t"] + cols:
                raise ConfigError(f"{directory / 'states.csv'}: unexpected header {reader.fieldnames}")
            for row in reader:
                values[int(row["node"]), int(row["t"])] = [float(row[c]) for c in cols]
    except OSError as exc:
        raise ConfigError(f"cannot read dataset in {directory}: {exc}") from exc
    if np.isnan(values).any():
        raise ConfigError(f"{directory / 'states.csv'} does not cover every (node, t)")
    return g, StateSeries(values, meta["dt"]), meta
