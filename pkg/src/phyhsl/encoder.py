"""Domain relation capture encoder.

Two views of the temporal graph are combined: first-order attention
message passing over the temporal graph, and a second-order Chebyshev
filter on the spatial Laplacian applied per timestamp. The last layers of
both are fused with a sinusoidal temporal encoding and pooled by a
per-node attention over time.

Embeddings are laid out as ``(N, T, d)`` tensors throughout; weights act on
row vectors (``h @ W``).
"""

from __future__ import annotations

import numpy as np

from . import numcore as nc
from .errors import ConfigError
from .numcore import ParamStore, Tensor
from .temporal_graph import LaplacianBundle, TemporalGraph

SIM_EPS = 1e-12


def temporal_encoding(T: int, d: int) -> np.ndarray:
    """Sinusoidal encoding with offset ``t`` in unit steps from the window start.

    ``TE[t, 2i] = sin(t / 10000^(2i/d))``, ``TE[t, 2i+1] = cos(t / 10000^(2i/d))``.
    """
    t = np.arange(T, dtype=np.float64)[:, None]
    j = np.arange(d)
    pair = (j // 2) * 2
    angle = t / np.power(10000.0, pair / d)[None, :]
    return np.where(j % 2 == 0, np.sin(angle), np.cos(angle))


def project_inputs(X: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map of raw states ``(N, T, D_in)`` into the hidden width."""
    return X @ w + b


def spatial_attention_layer(tg: TemporalGraph, h: Tensor, w_query: Tensor, w_key: Tensor,
                            w_value: Tensor, messages=None) -> Tensor:
    """One residual attention convolution over the temporal graph.

    For every arc ``j^t' -> i^t`` with weight ``A``, the score is
    ``A * cos(h_i W_query, h_j W_key)`` and the update is
    ``h_i + tanh(sum_j score * h_j W_value)``. A vertex without incoming arcs
    keeps its embedding.
    """
    n, T, d = h.shape
    src, dst, w = messages if messages is not None else tg.messages
    flat = h.reshape(n * T, d)
    q = flat @ w_query
    k = flat @ w_key
    v = flat @ w_value
    sim = nc.cosine_rows(nc.take_rows(q, dst), nc.take_rows(k, src), SIM_EPS)
    score = sim * w
    msg = nc.take_rows(v, src) * score.reshape(-1, 1)
    agg = nc.segment_sum(msg, dst, n * T)
    return h + agg.tanh().reshape(n, T, d)


def chebyshev_layer(lb: LaplacianBundle, c_prev: Tensor, w0: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """``T0(L~) C W0 + T1(L~) C W1 + T2(L~) C W2`` with ``T2 = 2 L~^2 - I``, per timestamp."""
    n, T, d = c_prev.shape
    Ls = lb.L_scaled
    flat = c_prev.reshape(n, T * d)
    t1 = nc.const_matmul(Ls, flat)
    t2 = nc.const_matmul(Ls, t1) * 2.0 - flat
    return (c_prev @ w0 + t1.reshape(n, T, d) @ w1 + t2.reshape(n, T, d) @ w2)


def fuse_and_embed(h_final: Tensor, c_final: Tensor, te: np.ndarray, mlp_layers) -> Tensor:
    """``q = MLP([c, h]) + TE(t)``."""
    joined = nc.concat([c_final, h_final], axis=-1)
    return nc.mlp_forward(joined, mlp_layers, "tanh") + te[None, :, :]


def attention_pool(q: Tensor, v_q1: Tensor, v_q2: Tensor):
    """Attention over time for every node.

    ``alpha[i, t] = softmax_t(v_q2 . tanh(q[i, t]))`` and
    ``u[i, t] = tanh(alpha[i, t] * (v_q1 * q[i, t]))``. Returns ``(U, alpha)``.
    """
    if q.shape[1] == 0:
        raise ConfigError("attention_pool needs at least one timestamp")
    score = (q.tanh() * v_q2).sum(axis=-1)
    alpha = nc.softmax(score, axis=1)
    n, T = alpha.shape
    u = (alpha.reshape(n, T, 1) * (q * v_q1)).tanh()
    return u, alpha


# -- parameters + full encoder ----------------------------------------------------

def init_encoder_params(store: ParamStore, d_in: int, d: int, n_layers: int) -> None:
    store.xavier("enc.input.W", d_in, d)
    store.zeros("enc.input.b", (d,))
    for k in range(n_layers):
        for name in ("query", "key", "value"):
            store.xavier(f"enc.att{k}.{name}", d, d)
        for m in range(3):
            store.xavier(f"enc.cheb{k}.W{m}", d, d)
    nc.init_mlp(store, "enc.fuse", [2 * d, d, d])
    # pooling vectors act as (1, d) rows
    store.add("enc.pool.v_q1", store.rng.uniform(-1.0, 1.0, size=d))
    store.add("enc.pool.v_q2", store.rng.uniform(-1.0, 1.0, size=d))


def encoder_layers(store: ParamStore) -> int:
    k = 0
    while f"enc.att{k}.query" in store:
        k += 1
    return k


def encode(store: ParamStore, X: Tensor, tg: TemporalGraph, lb: LaplacianBundle, te: np.ndarray,
           messages=None):
    """Full encoder; returns ``(U, alpha)`` with ``U`` of shape ``(N, T, d)``."""
    x0 = project_inputs(X, store["enc.input.W"], store["enc.input.b"])
    if messages is None:
        messages = tg.messages
    h = c = x0
    for k in range(encoder_layers(store)):
        h = spatial_attention_layer(tg, h, store[f"enc.att{k}.query"], store[f"enc.att{k}.key"],
                                    store[f"enc.att{k}.value"], messages)
        c = chebyshev_layer(lb, c, store[f"enc.cheb{k}.W0"], store[f"enc.cheb{k}.W1"],
                            store[f"enc.cheb{k}.W2"])
    q = fuse_and_embed(h, c, te, nc.mlp_params(store, "enc.fuse"))
    return attention_pool(q, store["enc.pool.v_q1"], store["enc.pool.v_q2"])
