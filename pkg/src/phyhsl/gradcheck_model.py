"""Finite-difference check of the whole forecaster on a tiny instance."""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .model import PhyHSL
from .numcore import gradient_probes
from .temporal_graph import StaticGraph
from .training import elbo_loss, training_context


def tiny_instance(seed: int = 0, n: int = 6, T: int = 8, d: int = 4, n_edges: int = 3):
    """Ring with two chords, random weights, states and biases; every branch enabled."""
    rng = np.random.default_rng(seed)
    pairs = [(i, (i + 1) % n) for i in range(n)] + [(0, n // 2), (1, n - 2)]
    g = StaticGraph(n, tuple((min(i, j), max(i, j), float(rng.uniform(0.5, 1.5))) for i, j in pairs))
    cfg = TrainConfig(hidden=d, hyperedges=n_edges, seed=seed, epochs=1)
    X = rng.uniform(0.0, 1.0, size=(n, T, 1))
    noise = rng.standard_normal((n, d))
    model = PhyHSL(g, 1, cfg)
    # zero-initialized biases put every projected input on one line, a
    # high-curvature point for cosine attention; probe a generic point instead
    for name in model.store.names():
        value = model.store.value(name)
        if not value.any():
            model.store.set_value(name, rng.uniform(-0.5, 0.5, size=value.shape))
    return model, X, noise


def model_gradcheck(seed: int = 0, per_param: int = 3, h: float = 1e-5) -> dict:
    """Probe ``per_param`` coordinates of every parameter against central differences.

    The loss is the full training objective: encoder, hypergraph layers,
    both latent branches (with a rollout past the encoded prefix), decoder
    and the variational loss.
    """
    model, X, noise = tiny_instance(seed)
    n_ctx = training_context(X.shape[1], model.cfg)

    def loss(_store):
        out = model.forward(X[:, :n_ctx], horizon=X.shape[1] - n_ctx, noise=noise)
        return elbo_loss(X, out.x_hat, out.posterior, model.cfg).objective

    probes = gradient_probes(loss, model.store, h=h, seed=seed, per_param=per_param)
    worst = max(probes, key=lambda p: p[4])
    by_module = {}
    for name, _, _, _, rel in probes:
        key = name.split(".")[0].rstrip("0123456789")
        by_module[key] = max(by_module.get(key, 0.0), rel)
    return {
        "max_rel_error": float(worst[4]),
        "worst_param": f"{worst[0]}[{worst[1]}]",
        "n_probes": len(probes),
        "n_params": len(model.store),
        "per_module": by_module,
    }
