from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NonFiniteError
from .params import ParamStore
from .tensor import no_grad


def _loss_value(loss_fn, store) -> float:
    with no_grad():
        out = loss_fn(store)
    return float(out.data) if hasattr(out, "data") else float(out)


# Below this magnitude a gradient is compared on an absolute scale; central
# differences carry ~eps*|loss|/h of rounding noise, which swamps any purely
# relative comparison of near-zero gradients.
GRAD_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float, floor: float = GRAD_FLOOR) -> float:
    """``|a - n| / max(|a|, |n|, floor)``."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_probes(loss_fn, store: ParamStore, n_probes: int = 20, h: float = 1e-5,
                    seed: int = 0, per_param: int | None = None) -> list:
    """Compare analytic and central-difference gradients at random coordinates.

    ``loss_fn(store)`` must return a scalar ``Tensor`` built from the store's
    parameters. Coordinates are drawn uniformly over all parameters, or, with
    ``per_param``, that many from every parameter entry. Returns one
    ``(name, flat_index, analytic, numeric, rel_err)`` tuple per probe.
    """
    if n_probes < 1:
        raise ConfigError("n_probes must be >= 1")
    names = store.names()
    if not names:
        raise ConfigError("store has no parameters")
    store.zero_grad()
    loss = loss_fn(store)
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite at the base point")
    loss.backward()
    analytic = {k: store.entries[k].grad.copy() for k in names}
    store.zero_grad()

    sizes = np.array([store.entries[k].value.size for k in names], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    if per_param is None:
        flat_ids = rng.choice(offsets[-1], size=min(n_probes, int(offsets[-1])), replace=False)
    else:
        flat_ids = np.concatenate([off + rng.choice(size, size=min(per_param, int(size)), replace=False)
                                   for off, size in zip(offsets[:-1], sizes)])

    probes = []
    for fid in np.sort(flat_ids):
        k = int(np.searchsorted(offsets, fid, side="right") - 1)
        name, idx = names[k], int(fid - offsets[k])
        flat = store.entries[name].value.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        up = _loss_value(loss_fn, store)
        flat[idx] = orig - h
        down = _loss_value(loss_fn, store)
        flat[idx] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteError(f"loss not finite when probing {name}[{idx}]")
        numeric = (up - down) / (2.0 * h)
        a = float(analytic[name].reshape(-1)[idx])
        probes.append((name, idx, a, numeric, relative_error(a, numeric)))
    return probes


def finite_diff_check(loss_fn, store: ParamStore, n_probes: int = 20, h: float = 1e-5,
                      seed: int = 0) -> float:
    """Worst relative error between analytic and finite-difference gradients."""
    return max(p[4] for p in gradient_probes(loss_fn, store, n_probes, h, seed))
