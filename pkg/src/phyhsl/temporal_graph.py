"""Static graphs, the temporal graph built from them, and Laplacian helpers.

The temporal graph has one vertex per (node, timestamp) pair. Its adjacency
is

    A(i^t, j^t')  = w_ij   if t' == t
                  = 1      if i == j and t' == t + 1
                  = 0      otherwise

so spatial edges live inside a timestamp and temporal edges link consecutive
observations of the same node, pointing forward in time.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StaticGraph:
    n_nodes: int
    edges: tuple
    directed: bool = False

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n_nodes < 1:
            raise ConfigError(f"graph needs at least one node, got {self.n_nodes}")
        seen = set()
        for i, j, w in edges:
            if i == j:
                raise ConfigError(f"self-loop on node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ConfigError(f"edge ({i}, {j}) out of range for {self.n_nodes} nodes")
            if not np.isfinite(w) or w < 0:
                raise ConfigError(f"edge ({i}, {j}) has invalid weight {w}")
            key = (i, j) if self.directed else (min(i, j), max(i, j))
            if key in seen:
                raise ConfigError(f"duplicate edge {key}")
            seen.add(key)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def arcs(self):
        """Directed (src, dst, weight) arrays; undirected edges appear both ways."""
        if not self.edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        e = np.array(self.edges, dtype=np.float64)
        src, dst, w = e[:, 0].astype(np.int64), e[:, 1].astype(np.int64), e[:, 2]
        if not self.directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            w = np.concatenate([w, w])
        return src, dst, w

    def adjacency_sparse(self) -> sp.csr_matrix:
        src, dst, w = self.arcs()
        return sp.csr_matrix((w, (src, dst)), shape=(self.n_nodes, self.n_nodes))

    def adjacency(self) -> np.ndarray:
        """Dense adjacency with ``A[i, j] = w_ij``."""
        return self.adjacency_sparse().toarray()

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency_sparse().sum(axis=1)).ravel()

    def permute(self, perm) -> "StaticGraph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return StaticGraph(self.n_nodes, tuple((int(perm[i]), int(perm[j]), w) for i, j, w in self.edges),
                           self.directed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["src", "dst", "weight"])
            for i, j, w in self.edges:
                writer.writerow([i, j, repr(w)])

    @classmethod
    def from_csv(cls, path, n_nodes: int | None = None, directed: bool = False) -> "StaticGraph":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["src", "dst", "weight"]:
                raise ConfigError(f"{path}: expected header src,dst,weight, got {reader.fieldnames}")
            edges = [(int(r["src"]), int(r["dst"]), float(r["weight"])) for r in reader]
        if n_nodes is None:
            n_nodes = max((max(i, j) for i, j, _ in edges), default=-1) + 1
        return cls(n_nodes, tuple(edges), directed)


@dataclass(frozen=True)
class TemporalGraph:
    """Temporal graph over ``n_nodes`` objects and ``n_steps`` timestamps.

    Vertex ``(i, t)`` has flat index ``i * n_steps + t``, matching a row-major
    ``N x T`` layout. Spatial weights may be overridden per timestamp through
    ``step_weights`` (shape ``T x n_arcs``); by default every timestamp copies
    the static weights.
    """

    n_nodes: int
    n_steps: int
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_weight: np.ndarray
    step_weights: np.ndarray | None = field(default=None)

    def flat(self, i, t):
        return np.asarray(i) * self.n_steps + np.asarray(t)

    def spatial_weight(self, t: int) -> np.ndarray:
        return self.arc_weight if self.step_weights is None else self.step_weights[t]

    @property
    def n_temporal_edges(self) -> int:
        return self.n_nodes * (self.n_steps - 1)

    @property
    def n_spatial_arcs(self) -> int:
        return len(self.arc_src) * self.n_steps

    def weight(self, i: int, t: int, j: int, t2: int) -> float:
        """``A(i^t, j^t2)``."""
        if t2 == t:
            hit = (self.arc_src == i) & (self.arc_dst == j)
            return float(self.spatial_weight(t)[hit].sum())
        if i == j and t2 == t + 1:
            return 1.0
        return 0.0

    def out_neighbors(self, i: int, t: int) -> list:
        """``[((j, t'), A(i^t, j^t'))]`` for every nonzero entry in row ``i^t``."""
        w = self.spatial_weight(t)
        sel = np.nonzero(self.arc_src == i)[0]
        out = [((int(self.arc_dst[k]), t), float(w[k])) for k in sel if w[k] != 0.0]
        if t + 1 < self.n_steps:
            out.append(((i, t + 1), 1.0))
        return out

    def in_neighbors(self, i: int, t: int) -> list:
        """``[((j, t'), A(j^t', i^t))]`` for every nonzero entry in column ``i^t``."""
        w = self.spatial_weight(t)
        sel = np.nonzero(self.arc_dst == i)[0]
        out = [((int(self.arc_src[k]), t), float(w[k])) for k in sel if w[k] != 0.0]
        if t > 0:
            out.append(((i, t - 1), 1.0))
        return out

    @cached_property
    def messages(self):
        """Cached :meth:`message_arrays`."""
        return self.message_arrays()

    def message_arrays(self):
        """Flat ``(src, dst, weight)`` arrays, one entry per nonzero of A.

        Messages travel along edge direction: spatial arcs within each
        timestamp plus the forward temporal edge ``(i, t-1) -> (i, t)``.
        """
        n, T = self.n_nodes, self.n_steps
        ts = np.arange(T)
        src = (self.arc_src[None, :] * T + ts[:, None]).ravel()
        dst = (self.arc_dst[None, :] * T + ts[:, None]).ravel()
        if self.step_weights is None:
            w = np.tile(self.arc_weight, T)
        else:
            w = np.asarray(self.step_weights).ravel()
        keep = w != 0.0
        src, dst, w = src[keep], dst[keep], w[keep]
        if T > 1:
            nodes = np.repeat(np.arange(n), T - 1)
            steps = np.tile(np.arange(T - 1), n)
            src = np.concatenate([src, nodes * T + steps])
            dst = np.concatenate([dst, nodes * T + steps + 1])
            w = np.concatenate([w, np.ones(n * (T - 1))])
        return src, dst, w

    def dense(self) -> np.ndarray:
        """Dense ``NT x NT`` adjacency (small graphs only)."""
        src, dst, w = self.message_arrays()
        size = self.n_nodes * self.n_steps
        out = np.zeros((size, size))
        np.add.at(out, (src, dst), w)
        return out


def build_temporal_adjacency(g: StaticGraph, T: int, step_weights=None) -> TemporalGraph:
    if T < 1:
        raise ConfigError(f"temporal graph needs T >= 1, got {T}")
    src, dst, w = g.arcs()
    if step_weights is not None:
        step_weights = np.asarray(step_weights, dtype=np.float64)
        if step_weights.shape != (T, len(w)):
            raise ConfigError(f"step_weights must have shape {(T, len(w))}, got {step_weights.shape}")
    for arr in (src, dst, w):
        arr.setflags(write=False)
    return TemporalGraph(g.n_nodes, T, src, dst, w, step_weights)


@dataclass(frozen=True)
class PowerIterationResult:
    value: float
    converged: bool
    iterations: int


def power_iteration(M, iters: int = 100, tol: float = 1e-6, seed: int = 0) -> PowerIterationResult:
    """Dominant eigenvalue of a symmetric PSD matrix.

    Stops once the eigen-residual ``||M v - rho v||`` of the unit iterate
    drops below ``tol``; the Rayleigh quotient error is then at most
    ``tol**2 / gap``.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n == 0:
        return PowerIterationResult(0.0, True, 0)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for k in range(1, iters + 1):
        w = M @ v
        rho = float(v @ w)
        if np.linalg.norm(w - rho * v) < tol:
            return PowerIterationResult(rho, True, k)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerIterationResult(0.0, True, k)
        v = w / norm
    return PowerIterationResult(rho, False, iters)


def power_iteration_lambda_max(M, iters: int = 100, tol: float = 1e-6, seed: int = 0) -> float:
    res = power_iteration(M, iters, tol, seed)
    if not res.converged:
        warnings.warn(f"power iteration did not converge in {iters} iterations", ConvergenceWarning,
                      stacklevel=2)
    return res.value


LAMBDA_MAX_ITERS = 5000
LAMBDA_FLOOR = 1e-9


@dataclass(frozen=True)
class LaplacianBundle:
    L: np.ndarray
    lambda_max: float
    L_scaled: np.ndarray


def normalized_laplacian(g: StaticGraph, iters: int = LAMBDA_MAX_ITERS, tol: float = 1e-6,
                         seed: int = 0) -> LaplacianBundle:
    """``L = I - D^-1/2 A D^-1/2`` with ``L_scaled = 2 L / lambda_max - I``.

    Computed as ``D^-1/2 (D - A) D^-1/2`` with zero ``D^-1/2`` entries for
    isolated nodes, so an isolated node has an all-zero row (``L = 0`` for an
    edgeless graph). When the estimated ``lambda_max`` is below 1e-9 it falls
    back to 2, the upper bound of the normalized spectrum.
    """
    if g.directed:
        raise ConfigError("normalized_laplacian supports undirected graphs only")
    A = g.adjacency()
    deg = A.sum(axis=1)
    isolated = deg <= 0
    if isolated.any():
        warnings.warn(f"{int(isolated.sum())} isolated node(s); their D^-1/2 entries set to 0",
                      stacklevel=2)
    inv_sqrt = np.where(isolated, 0.0, 1.0 / np.sqrt(np.where(isolated, 1.0, deg)))
    n = g.n_nodes
    L = inv_sqrt[:, None] * (np.diag(deg) - A) * inv_sqrt[None, :]
    lam = power_iteration_lambda_max(L, iters, tol, seed)
    if lam < LAMBDA_FLOOR:
        lam = 2.0
    L_scaled = 2.0 * L / lam - np.eye(n)
    for arr in (L, L_scaled):
        arr.setflags(write=False)
    return LaplacianBundle(L, lam, L_scaled)
