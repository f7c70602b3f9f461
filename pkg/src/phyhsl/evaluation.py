"""Metrics, baselines and experiment orchestration."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .errors import ConfigError, PhyHSLError, ShapeError
from .model import PhyHSL
from .numcore import ParamStore
from .training import train

log = logging.getLogger(__name__)

TIMING_WINDOW = 50
RESULT_KEYS = ("dataset", "config_echo", "repeats", "mae_mean", "mae_std", "baseline_mae",
               "seconds_per_iter", "per_horizon")
ABLATIONS = (
    ("w/o Phy", {"use_phys": False}),
    ("w/o Koop", {"use_koop": False}),
    ("w/o DHSL", {"use_dhsl": False}),
    ("w/o Phy&Koop", {"use_phys": False, "use_koop": False, "allow_no_dynamics": True}),
    ("PhyHSL", {}),
)


def _as_blocks(ref, pred):
    ref = np.asarray(ref, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if ref.shape != pred.shape:
        raise ShapeError(f"mae: reference {ref.shape} and prediction {pred.shape} differ")
    if ref.ndim < 1 or ref.shape[0] == 0:
        raise ShapeError("mae needs at least one node")
    return ref.reshape(ref.shape[0], -1), pred.reshape(pred.shape[0], -1)


def mae(ref, pred, norm: str = "l2") -> float:
    """Per-node norm of the flattened prediction error, averaged over nodes.

    ``norm="l2"`` uses the Euclidean norm of each node's block; ``"l1"`` the
    sum of absolute errors.
    """
    r, p = _as_blocks(ref, pred)
    diff = p - r
    if norm == "l2":
        per_node = np.sqrt(np.sum(diff * diff, axis=1))
    elif norm == "l1":
        per_node = np.sum(np.abs(diff), axis=1)
    else:
        raise ConfigError(f"unknown norm {norm!r}; use 'l2' or 'l1'")
    return float(np.mean(per_node))


def per_horizon_mae(ref, pred, norm: str = "l2") -> list:
    """MAE of each forecast step separately; length equals the horizon."""
    ref = np.asarray(ref, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if ref.shape != pred.shape or ref.ndim != 3:
        raise ShapeError(f"per-horizon MAE needs matching (N, H, D) arrays, got {ref.shape}, {pred.shape}")
    return [mae(ref[:, h], pred[:, h], norm) for h in range(ref.shape[1])]


def persistence_baseline(observed, horizon: int) -> np.ndarray:
    """Repeat the last observed frame ``horizon`` times."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim != 3 or observed.shape[1] == 0:
        raise ShapeError(f"observed series must be (N, T>0, D), got {observed.shape}")
    return np.repeat(observed[:, -1:], horizon, axis=1)


@dataclass
class MetricReport:
    mae: float
    mae_std: float
    per_horizon: list
    seconds_per_iter: float
    baseline_mae: float
    repeats: int
    runs: list = field(default_factory=list)


@dataclass
class RunSpec:
    """Where to cut the series: ``n_obs`` observed frames, then ``horizon`` scored ones."""
    n_obs: int
    horizon: int

    @classmethod
    def from_config(cls, T: int, cfg: TrainConfig, n_obs: int | None = None, horizon: int | None = None):
        n_obs = int(np.floor(cfg.split_fraction * T)) if n_obs is None else int(n_obs)
        horizon = cfg.horizon if horizon is None else int(horizon)
        if n_obs < 1 or horizon < 1:
            raise ConfigError(f"need at least one observed and one predicted frame (n_obs={n_obs}, horizon={horizon})")
        if n_obs + horizon > T:
            raise ConfigError(f"n_obs={n_obs} + horizon={horizon} exceeds series length {T}")
        return cls(n_obs, horizon)


def seconds_per_iter(history, window: int = TIMING_WINDOW) -> float:
    secs = [h["seconds"] for h in history[-window:]]
    return float(np.mean(secs)) if secs else 0.0


def fit_and_forecast(graph, values, cfg: TrainConfig, run: RunSpec, log_fn=None):
    """Train one model on the first ``run.n_obs`` frames and forecast ``run.horizon`` frames."""
    observed = values[:, :run.n_obs]
    model = PhyHSL(graph, values.shape[2], cfg)
    _, report = train(model, observed, cfg, log=log_fn)
    return model, report, model.forecast(observed, run.horizon)


def run_experiment(graph, values, cfg: TrainConfig, repeats: int = 10, *, n_obs: int | None = None,
                   horizon: int | None = None, norm: str = "l2", workdir=None, dataset: str = "",
                   history_path: str | None = "loss_history.csv") -> MetricReport:
    """Train ``repeats`` models with seeds ``seed + r`` and score the held-out frames.

    With ``workdir`` set, writes ``results.json``, per-repeat ``runs.csv``
    and the per-epoch loss CSV.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    values = np.asarray(values, dtype=np.float64)
    run = RunSpec.from_config(values.shape[1], cfg, n_obs, horizon)
    target = values[:, run.n_obs:run.n_obs + run.horizon]
    baseline = mae(target, persistence_baseline(values[:, :run.n_obs], run.horizon), norm)
    maes, curves, timings, runs, history_rows = [], [], [], [], []
    for r in range(repeats):
        seed = cfg.seed + r
        rcfg = cfg.replace(seed=seed)
        try:
            _, report, pred = fit_and_forecast(graph, values, rcfg, run)
        except PhyHSLError as exc:
            raise PhyHSLError(f"repeat {r} (seed {seed}) failed: {exc}") from exc
        m = mae(target, pred, norm)
        maes.append(m)
        curves.append(per_horizon_mae(target, pred, norm))
        timings.append(seconds_per_iter(report.history))
        runs.append({"seed": seed, "mae": m, "final_loss": report.total})
        history_rows.extend({"repeat": r, "seed": seed, **h} for h in report.history)
        log.info("repeat %d seed %d mae %.6g (baseline %.6g)", r, seed, m, baseline)
    result = MetricReport(
        mae=float(np.mean(maes)),
        mae_std=float(np.std(maes)),
        per_horizon=[float(v) for v in np.mean(curves, axis=0)],
        seconds_per_iter=float(np.mean(timings)),
        baseline_mae=baseline,
        repeats=repeats,
        runs=runs,
    )
    if workdir is not None:
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        write_results(workdir / "results.json", result, cfg, dataset)
        write_rows(workdir / "runs.csv", runs, ["seed", "mae", "final_loss"])
        if history_path:
            write_rows(workdir / history_path, history_rows,
                       ["repeat", "seed", "epoch", "recon", "kl", "total", "grad_norm", "seconds"])
    return result


def results_document(result: MetricReport, cfg: TrainConfig, dataset: str) -> dict:
    return {
        "dataset": dataset,
        "config_echo": cfg.to_dict(),
        "repeats": result.repeats,
        "mae_mean": result.mae,
        "mae_std": result.mae_std,
        "baseline_mae": result.baseline_mae,
        "seconds_per_iter": result.seconds_per_iter,
        "per_horizon": result.per_horizon,
    }


def write_results(path, result: MetricReport, cfg: TrainConfig, dataset: str) -> None:
    doc = results_document(result, cfg, dataset)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_rows(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sweep(graph, values, cfg: TrainConfig, axis: str, grid, repeats: int = 1, norm: str = "l2",
          workdir=None) -> list:
    """One experiment per grid value along ``train_len`` or ``pred_len``.

    Values that do not fit the series are skipped with a warning. Returns
    rows ``{axis, value, mae, std}`` and writes ``sweep.csv`` when
    ``workdir`` is given.
    """
    if axis not in ("train_len", "pred_len"):
        raise ConfigError(f"sweep axis must be 'train_len' or 'pred_len', got {axis!r}")
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[1]
    rows = []
    for v in grid:
        v = int(v)
        kwargs = {"n_obs": v} if axis == "train_len" else {"horizon": v}
        try:
            RunSpec.from_config(T, cfg, **kwargs)
        except ConfigError as exc:
            warnings.warn(f"skipping {axis}={v}: {exc}", stacklevel=2)
            continue
        res = run_experiment(graph, values, cfg, repeats, norm=norm, **kwargs)
        rows.append({"axis": axis, "value": v, "mae": res.mae, "std": res.mae_std})
    if workdir is not None:
        Path(workdir).mkdir(parents=True, exist_ok=True)
        write_rows(Path(workdir) / "sweep.csv", rows, ["axis", "value", "mae", "std"])
    return rows


def ablate(graph, values, cfg: TrainConfig, repeats: int = 1, norm: str = "l2", workdir=None) -> list:
    """Full model plus the four branch ablations; rows ``{variant, mae, std}``."""
    rows = []
    for label, flags in ABLATIONS:
        res = run_experiment(graph, values, cfg.replace(**flags), repeats, norm=norm)
        rows.append({"variant": label, "mae": res.mae, "std": res.mae_std})
    if workdir is not None:
        Path(workdir).mkdir(parents=True, exist_ok=True)
        write_rows(Path(workdir) / "ablation.csv", rows, ["variant", "mae", "std"])
    return rows


# -- checkpoints --------------------------------------------------------------------

def save_checkpoint(path, model: PhyHSL) -> None:
    doc = {"config": model.cfg.to_dict(), "d_in": model.d_in, "n_nodes": model.graph.n_nodes,
           "shift": model.shift.tolist(), "scale": model.scale.tolist(), "context_len": model.context_len,
           "params": model.store.to_dict()}
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_checkpoint(path, graph) -> PhyHSL:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc["n_nodes"] != graph.n_nodes:
        raise ConfigError(f"checkpoint was trained on {doc['n_nodes']} nodes, graph has {graph.n_nodes}")
    model = PhyHSL(graph, doc["d_in"], TrainConfig.from_dict(doc["config"]), ParamStore.from_dict(doc["params"]))
    model.shift = np.asarray(doc["shift"], dtype=np.float64)
    model.scale = np.asarray(doc["scale"], dtype=np.float64)
    model.context_len = doc["context_len"]
    return model


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
