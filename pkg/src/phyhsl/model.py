"""The assembled forecaster: encoder -> hypergraph learning -> dual dynamics -> decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .config import TrainConfig
from .dhsl import dhsl_layer_params, dhsl_stack, init_dhsl_params
from .dynamics import (
    PosteriorParams,
    fuse_decode,
    koopman_propagate,
    ode_derivative_g,
    ode_solve,
    posterior_params,
    reparameterize,
    row_normalized_adjacency,
)
from .encoder import encode, init_encoder_params, temporal_encoding
from .errors import ShapeError
from .numcore import ParamStore, Tensor
from .temporal_graph import StaticGraph, build_temporal_adjacency, normalized_laplacian


@dataclass
class ModelOutput:
    x_hat: Tensor                 # (N, T + horizon, D_in)
    posterior: PosteriorParams | None
    z_phys: Tensor                # (N, T + horizon, d)
    z_koop: Tensor
    embedding: Tensor             # F, (N, T, d)
    sequence: Tensor              # U, (N, T, d)
    attention: Tensor             # alpha, (N, T)
    incidences: list


def init_params(store: ParamStore, d_in: int, cfg: TrainConfig) -> ParamStore:
    d = cfg.hidden
    init_encoder_params(store, d_in, d, cfg.encoder_layers)
    init_dhsl_params(store, d, cfg.hyperedges, cfg.dhsl_layers)
    nc.init_mlp(store, "post.mean", [d, d, d])
    nc.init_mlp(store, "post.logvar", [d, d, d])
    nc.init_mlp(store, "ode.g", [2 * d, d, d])
    store.add("koop.K", np.eye(d))
    nc.init_mlp(store, "dec", [2 * d, d, d_in])
    return store


class PhyHSL:
    """Forecaster bound to one static graph.

    Parameters live in ``self.store``; graph-derived constants (Laplacian,
    row-normalized adjacency, temporal graphs per window length) are computed
    once.
    """

    def __init__(self, graph: StaticGraph, d_in: int, cfg: TrainConfig, store: ParamStore | None = None):
        self.graph = graph
        self.d_in = d_in
        self.cfg = cfg
        self.laplacian = normalized_laplacian(graph)
        self.a_hat = row_normalized_adjacency(graph)
        if store is None:
            store = init_params(ParamStore(seed=cfg.seed), d_in, cfg)
        self.store = store
        self._temporal = {}
        # set by training: per-channel input scaling and the encoded window length
        self.shift = np.zeros(d_in)
        self.scale = np.ones(d_in)
        self.context_len = None

    def temporal_graph(self, T: int):
        if T not in self._temporal:
            self._temporal[T] = (build_temporal_adjacency(self.graph, T), temporal_encoding(T, self.cfg.hidden))
        return self._temporal[T]

    def forward(self, X, horizon: int = 0, noise=None, keep_incidence: bool = False) -> ModelOutput:
        """Run the pipeline on an observed window ``X`` of shape ``(N, T, D_in)``.

        ``noise`` is the reparameterization draw (``N x d``); ``None`` means
        zeros, i.e. the posterior mean.
        """
        cfg, store = self.cfg, self.store
        X = X if isinstance(X, Tensor) else Tensor(X)
        n, T, d_in = X.shape
        if n != self.graph.n_nodes or d_in != self.d_in:
            raise ShapeError(f"input {X.shape} does not match graph/inputs ({self.graph.n_nodes}, T, {self.d_in})")
        tg, te = self.temporal_graph(T)
        U, alpha = encode(store, X, tg, self.laplacian, te)
        incidences = [] if keep_incidence else None
        F = dhsl_stack(U, dhsl_layer_params(store), cfg.use_dhsl, cfg.incidence_norm, incidences)
        d = cfg.hidden
        total = T + horizon

        posterior = None
        if cfg.use_phys:
            posterior = posterior_params(F, nc.mlp_params(store, "post.mean"),
                                         nc.mlp_params(store, "post.logvar"))
            z0 = reparameterize(posterior, np.zeros((n, d)) if noise is None else noise)
            mlp_g = nc.mlp_params(store, "ode.g")
            z_phys = ode_solve(z0, lambda z: ode_derivative_g(z, self.a_hat, mlp_g), total - 1, cfg.substeps)
        else:
            z_phys = Tensor(np.zeros((n, total, d)))

        if cfg.use_koop:
            z_koop = koopman_propagate(F, store["koop.K"], horizon)
        elif not cfg.use_phys:
            # hypergraph-only variant: decode the embedding itself, held at its last frame
            held = [F] + [F[:, T - 1:T]] * horizon
            z_koop = nc.concat(held, axis=1) if horizon else F
        else:
            z_koop = Tensor(np.zeros((n, total, d)))

        x_hat = fuse_decode(z_phys, z_koop, nc.mlp_params(store, "dec"))
        return ModelOutput(x_hat, posterior, z_phys, z_koop, F, U, alpha, incidences or [])

    def fit_scaling(self, X) -> None:
        """Per-channel mean and standard deviation over nodes and time."""
        X = np.asarray(X, dtype=np.float64)
        self.shift = X.mean(axis=(0, 1))
        sd = X.std(axis=(0, 1))
        self.scale = np.where(sd > 0, sd, 1.0)

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.shift) / self.scale

    def unstandardize(self, Z) -> np.ndarray:
        return np.asarray(Z) * self.scale + self.shift

    def forecast(self, X_obs, horizon: int, return_output: bool = False, keep_incidence: bool = False):
        """Posterior-mean forecast of the ``horizon`` frames after ``X_obs``.

        The encoder sees only the last ``context_len`` observed frames, the
        window length it was trained on. Returns values in data units, shape
        ``(N, horizon, D_in)``; with ``return_output`` also the
        :class:`ModelOutput` of that window, whose frame 0 is observed frame
        ``T - context_len``.
        """
        X_obs = np.asarray(X_obs, dtype=np.float64)
        T = X_obs.shape[1]
        W = T if self.context_len is None else min(self.context_len, T)
        with nc.no_grad():
            out = self.forward(self.standardize(X_obs[:, T - W:]), horizon, keep_incidence=keep_incidence)
        pred = self.unstandardize(out.x_hat.data[:, W:])
        return (pred, out) if return_output else pred

    def predict(self, X_obs, horizon: int) -> np.ndarray:
        return self.forecast(X_obs, horizon)
