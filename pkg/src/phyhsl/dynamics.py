"""Latent dynamics: variational initial state, neural-ODE branch, Koopman branch, decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import numcore as nc
from .errors import ConfigError, NonFiniteError
from .numcore import Tensor
from .temporal_graph import StaticGraph


@dataclass
class PosteriorParams:
    mu: Tensor
    log_var: Tensor


def posterior_params(F: Tensor, mlp_mean, mlp_logvar) -> PosteriorParams:
    """Gaussian posterior over each node's initial latent state from the time-averaged embedding."""
    fbar = F.mean(axis=1)
    return PosteriorParams(nc.mlp_forward(fbar, mlp_mean, "tanh"),
                           nc.mlp_forward(fbar, mlp_logvar, "tanh"))


def reparameterize(p: PosteriorParams, noise) -> Tensor:
    """``z0 = mu + exp(log_var / 2) * noise``."""
    noise = np.asarray(noise.data if isinstance(noise, Tensor) else noise, dtype=np.float64)
    if noise.shape != p.mu.shape:
        raise ConfigError(f"noise shape {noise.shape} != posterior shape {p.mu.shape}")
    return p.mu + (p.log_var * 0.5).exp() * noise


def row_normalized_adjacency(g: StaticGraph) -> sp.csr_matrix:
    """``D^-1 A``; rows of isolated nodes stay zero."""
    A = g.adjacency_sparse()
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.csr_matrix(sp.diags(inv) @ A)


def ode_derivative_g(z: Tensor, graph, mlp_g) -> Tensor:
    """Graph vector field ``dz_i/dt = MLP_g([z_i, sum_j Ahat_ij z_j])``.

    ``graph`` is a :class:`StaticGraph` or a precomputed row-normalized
    adjacency matrix.
    """
    a_hat = row_normalized_adjacency(graph) if isinstance(graph, StaticGraph) else graph
    agg = nc.const_matmul(a_hat, z)
    return nc.mlp_forward(nc.concat([z, agg], axis=-1), mlp_g, "tanh")


def rk4_step(f, y, h: float):
    """Classical fourth-order Runge-Kutta step for an autonomous field.

    Works on numpy arrays and on Tensors alike.
    """
    k1 = f(y)
    k2 = f(y + k1 * (h / 2.0))
    k3 = f(y + k2 * (h / 2.0))
    k4 = f(y + k3 * h)
    return y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)


def ode_solve(z0: Tensor, g, n_steps: int, substeps: int = 4) -> Tensor:
    """Integrate ``dz/dt = g(z)`` over unit intervals ``0..n_steps``.

    Each unit interval takes ``substeps`` RK4 steps. Returns states at every
    integer time, including ``t = 0``, stacked as ``(N, n_steps + 1, d)``.
    """
    if substeps < 1:
        raise ConfigError(f"substeps must be >= 1, got {substeps}")
    if n_steps < 0:
        raise ConfigError(f"n_steps must be >= 0, got {n_steps}")
    h = 1.0 / substeps
    z = z0
    states = [z0]
    for step in range(n_steps):
        for _ in range(substeps):
            z = rk4_step(g, z, h)
        if not np.all(np.isfinite(z.data)):
            raise NonFiniteError(f"ODE state became non-finite at step {step + 1}")
        states.append(z)
    return nc.stack(states, axis=1)


def koopman_propagate(F: Tensor, K: Tensor, horizon: int) -> Tensor:
    """Koopman-branch latent trajectory for an observed window of ``n`` frames.

    Frame 0 is ``f^0``; frame ``t + 1`` is ``K f^t`` for ``t < n`` (teacher
    forced); frames past the window continue ``K^(k+1) f^(n-1)``. The result
    has ``n + horizon`` frames, aligned with observation indices.
    """
    n = F.shape[1]
    if horizon < 0:
        raise ConfigError(f"horizon must be >= 0, got {horizon}")
    kt = K.T
    advanced = F @ kt                      # row t holds K f^t
    parts = [F[:, :1], advanced[:, : n - 1]]
    if horizon > 0:
        cur = advanced[:, n - 1]
        rollout = [cur]
        for _ in range(horizon - 1):
            cur = cur @ kt
            rollout.append(cur)
        parts.append(nc.stack(rollout, axis=1))
    return nc.concat(parts, axis=1)


def fuse_decode(z_phys: Tensor, z_koop: Tensor, mlp_dec) -> Tensor:
    """``x_hat = MLP(tanh([z, z~]))``."""
    if z_phys.shape != z_koop.shape:
        raise ConfigError(f"latent trajectories misaligned: {z_phys.shape} vs {z_koop.shape}")
    return nc.mlp_forward(nc.concat([z_phys, z_koop], axis=-1).tanh(), mlp_dec, "tanh")


def fit_koopman_lstsq(frames) -> np.ndarray:
    """Least-squares (DMD-style) fit of ``K`` from snapshot pairs ``f^t -> f^(t+1)``.

    ``frames`` is ``(T, d)`` or ``(N, T, d)``; every node contributes pairs.
    """
    f = np.asarray(frames.data if isinstance(frames, Tensor) else frames, dtype=np.float64)
    if f.ndim == 2:
        f = f[None]
    d = f.shape[-1]
    x0 = f[:, :-1].reshape(-1, d)
    x1 = f[:, 1:].reshape(-1, d)
    kt, *_ = np.linalg.lstsq(x0, x1, rcond=None)
    return kt.T


def koopman_rollout(K: np.ndarray, f0: np.ndarray, steps: int) -> np.ndarray:
    """``[f0, K f0, K^2 f0, ...]`` as rows, ``steps + 1`` of them."""
    out = [np.asarray(f0, dtype=np.float64)]
    for _ in range(steps):
        out.append(K @ out[-1])
    return np.stack(out)
