"""Variational objective, time split and the optimization loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .config import TrainConfig
from .dynamics import PosteriorParams
from .errors import ConfigError, DivergenceError, NonFiniteError, ShapeError
from .numcore import ParamStore, Tensor


@dataclass
class LossReport:
    recon: float
    kl: float
    total: float
    history: list = field(default_factory=list)    # one dict per epoch
    objective: Tensor | None = field(default=None, repr=False, compare=False)


def kl_terms(p: PosteriorParams) -> Tensor:
    """Differentiable ``0.5 * sum(exp(lv) + mu^2 - 1 - lv)`` against ``N(0, I)``."""
    return ((p.log_var.exp() + p.mu * p.mu - 1.0 - p.log_var) * 0.5).sum()


def kl_diag_gaussian(p: PosteriorParams) -> float:
    return float(kl_terms(p).data)


def elbo_loss(X, X_hat: Tensor, p: PosteriorParams | None, cfg: TrainConfig) -> LossReport:
    """Negative ELBO ``recon / (2 sigma2) + kl_weight * KL``.

    ``recon`` is the summed squared error over the aligned window. With no
    posterior (physics branch off) the KL term is zero.
    """
    x = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    if x.shape != X_hat.shape:
        raise ShapeError(f"targets {x.shape} and reconstruction {X_hat.shape} are misaligned")
    diff = X_hat - x
    recon = (diff * diff).sum()
    total = recon * (1.0 / (2.0 * cfg.sigma2))
    kl_val = 0.0
    if p is not None:
        kl = kl_terms(p)
        kl_val = float(kl.data)
        total = total + kl * cfg.kl_weight
    return LossReport(float(recon.data), kl_val, float(total.data), objective=total)


def time_split(X, fraction: float):
    """Split ``(N, T, ...)`` at ``floor(fraction * T)`` into (observed, held-out)."""
    X = np.asarray(X)
    T = X.shape[1]
    n_obs = int(np.floor(fraction * T))
    if not 0 < n_obs < T:
        raise ConfigError(f"split fraction {fraction} leaves an empty part for T={T}")
    return X[:, :n_obs], X[:, n_obs:]


def smooth(values, window: int = 10) -> np.ndarray:
    """Trailing moving average over complete windows."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v[:0]
    c = np.cumsum(np.concatenate([[0.0], v]))
    return (c[window:] - c[:-window]) / window


def training_context(n_obs: int, cfg: TrainConfig) -> int:
    """Number of leading frames fed to the encoder during training.

    With ``train_rollout`` the observed window is itself split in time: the
    prefix is encoded and the remaining frames are rolled out and scored, so
    the extrapolation path is trained. Without it the whole window is encoded.
    """
    if not cfg.train_rollout:
        return n_obs
    n_ctx = int(np.floor(cfg.split_fraction * n_obs))
    return min(max(n_ctx, 1), n_obs)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Step size for ``epoch``; ``cosine`` anneals from ``lr`` to zero over the run."""
    if cfg.lr_schedule == "cosine" and cfg.epochs > 1:
        return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
    return cfg.lr


def train(model, data, cfg: TrainConfig | None = None, log=None):
    """Full-batch training on the observed window ``data`` of shape ``(N, T, D_in)``.

    Every epoch encodes the first :func:`training_context` frames, predicts
    the rest of the window and scores the reconstruction of all frames.
    The reparameterization noise is drawn once from the seeded generator and
    kept for every epoch unless ``cfg.resample_noise`` is set. Returns
    ``(store, report)``; ``report.history`` carries one record per epoch.
    """
    cfg = cfg or model.cfg
    store: ParamStore = model.store
    X = np.asarray(data, dtype=np.float64)
    if cfg.standardize:
        model.fit_scaling(X)
        X = model.standardize(X)
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    noise = rng.standard_normal((X.shape[0], cfg.hidden))
    n_ctx = training_context(X.shape[1], cfg)
    context = X[:, :n_ctx]
    model.context_len = n_ctx
    history = []
    last_finite = None
    report = None
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if cfg.resample_noise and epoch > 0:
            noise = rng.standard_normal(noise.shape)
        try:
            out = model.forward(context, horizon=X.shape[1] - n_ctx, noise=noise)
        except NonFiniteError as exc:
            raise DivergenceError(epoch, last_finite, str(exc)) from exc
        report = elbo_loss(X, out.x_hat, out.posterior, cfg)
        if not np.isfinite(report.total):
            raise DivergenceError(epoch, last_finite)
        store.zero_grad()
        report.objective.backward()
        gnorm = store.clip_grad_norm(cfg.clip_norm) if cfg.clip_norm else store.grad_norm()
        if not np.isfinite(gnorm):
            raise DivergenceError(epoch, report.total, "non-finite gradient")
        if cfg.lr > 0:
            nc.adam_update(store, lr=learning_rate(cfg, epoch))
        else:
            store.zero_grad()
        last_finite = report.total
        rec = {"epoch": epoch, "recon": report.recon, "kl": report.kl, "total": report.total,
               "grad_norm": gnorm, "seconds": time.perf_counter() - start}
        history.append(rec)
        if log is not None:
            log(rec)
    if report is None:
        return store, LossReport(0.0, 0.0, 0.0, history)
    return store, LossReport(report.recon, report.kl, report.total, history)
