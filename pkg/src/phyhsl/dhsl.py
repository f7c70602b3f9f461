"""Dynamic hypergraph structure learning.

No hyperedges are given up front. Each layer derives a low-rank incidence
``Lambda^t = U^t W_Lambda`` from the current node states, pools nodes into
hyperedges, mixes hyperedges with ``W_E``, and broadcasts back to nodes:

    E^t = tanh(W_E Lambda^tT U^t) + Lambda^tT U^t
    F^t = Lambda^t E^t
"""

from __future__ import annotations

from . import numcore as nc
from .errors import ConfigError
from .numcore import ParamStore, Tensor

INCIDENCE_MODES = ("none", "softmax")


def incidence_from_states(U: Tensor, w_lambda: Tensor, normalize: str = "none") -> Tensor:
    """``(N, T, d) @ (d, I) -> (N, T, I)``; optionally softmax over hyperedges."""
    if U.shape[-1] != w_lambda.shape[0]:
        raise ConfigError(f"incidence: states {U.shape} vs W_Lambda {w_lambda.shape}")
    lam = U @ w_lambda
    if normalize == "softmax":
        lam = nc.softmax(lam, axis=-1)
    elif normalize != "none":
        raise ConfigError(f"unknown incidence normalization {normalize!r}")
    return lam


def hypergraph_conv_layer(lam: Tensor, U: Tensor, w_e: Tensor):
    """One node -> hyperedge -> node pass. Returns ``(E, F)``.

    ``E`` has shape ``(T, I, d)`` and ``F`` has shape ``(N, T, d)``.
    """
    n, T, n_edges = lam.shape
    if w_e.shape != (n_edges, n_edges):
        raise ConfigError(f"W_E must be {(n_edges, n_edges)}, got {w_e.shape}")
    lam_t = lam.transpose(1, 2, 0)      # (T, I, N)
    u_t = U.transpose(1, 0, 2)          # (T, N, d)
    pooled = lam_t @ u_t                # (T, I, d)
    E = (w_e @ pooled).tanh() + pooled
    F = lam.transpose(1, 0, 2) @ E      # (T, N, d)
    return E, F.transpose(1, 0, 2)


def init_dhsl_params(store: ParamStore, d: int, n_edges: int, n_layers: int) -> None:
    for layer in range(n_layers):
        store.xavier(f"dhsl{layer}.W_lambda", d, n_edges)
        store.xavier(f"dhsl{layer}.W_E", n_edges, n_edges)


def dhsl_layer_params(store: ParamStore) -> list:
    out = []
    while f"dhsl{len(out)}.W_lambda" in store:
        k = len(out)
        out.append((store[f"dhsl{k}.W_lambda"], store[f"dhsl{k}.W_E"]))
    return out


def dhsl_stack(U: Tensor, layers: list, enabled: bool = True, normalize: str = "none",
               incidences: list | None = None) -> Tensor:
    """Apply the stacked hypergraph layers, each with its own ``(W_Lambda, W_E)``.

    With ``enabled=False`` the states pass through unchanged. When
    ``incidences`` is a list, each layer's incidence tensor is appended to it.
    """
    if not enabled:
        return U
    if len(layers) < 1:
        raise ConfigError("dhsl_stack needs at least one layer")
    F = U
    for w_lambda, w_e in layers:
        lam = incidence_from_states(F, w_lambda, normalize)
        if incidences is not None:
            incidences.append(lam)
        _, F = hypergraph_conv_layer(lam, F, w_e)
    return F
