"""Command-line entry point.

Subcommands: generate, train, predict, evaluate, ablate, sweep, gradcheck.
Every path is taken relative to ``--workdir``. Errors are printed to stderr
as one JSON object and the process exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import datagen
from .config import TrainConfig, load_json
from .errors import ConfigError, PhyHSLError
from .evaluation import (
    RunSpec,
    ablate,
    load_checkpoint,
    run_experiment,
    save_checkpoint,
    sweep,
    write_rows,
)
from .gradcheck_model import model_gradcheck
from .model import PhyHSL
from .training import train

log = logging.getLogger("phyhsl")

RUN_KEYS = {"dataset", "repeats", "norm"}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig fields (plus dataset/repeats/norm)")
    p.add_argument("--dataset", help="dataset directory written by `generate`")
    p.add_argument("--seed", type=int)
    group = p.add_argument_group("config overrides")
    for f in fields(TrainConfig):
        if f.name == "seed":
            continue
        kind = {bool: _bool, "bool": _bool, int: int, "int": int, float: float, "float": float}.get(f.type, str)
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)


def resolve(args, workdir: Path):
    """Merge config file and flag overrides; returns ``(TrainConfig, run_options)``."""
    doc = {}
    if args.config:
        doc = load_json(workdir / args.config)
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    run = {k: doc.pop(k) for k in list(doc) if k in RUN_KEYS}
    for f in fields(TrainConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            doc[f.name] = val
    cfg = TrainConfig.from_dict(doc)
    if getattr(args, "dataset", None):
        run["dataset"] = args.dataset
    if getattr(args, "repeats", None) is not None:
        run["repeats"] = args.repeats
    if getattr(args, "norm", None):
        run["norm"] = args.norm
    return cfg, run


def _load(run, workdir: Path):
    if "dataset" not in run:
        raise ConfigError("no dataset given (use --dataset or a 'dataset' key in the config)")
    path = workdir / run["dataset"]
    g, series, meta = datagen.load_dataset(path)
    return g, series.values, str(run["dataset"])


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# -- subcommands ----------------------------------------------------------------------

def cmd_generate(args, workdir: Path) -> int:
    spec_doc = {}
    if args.config:
        spec_doc = load_json(workdir / args.config)
    graph_doc = spec_doc.pop("graph", {})
    for key in ("kind", "t_end", "n_samples", "noise_std", "seed", "d_in"):
        val = getattr(args, key)
        if val is not None:
            spec_doc[key] = val
    if args.param:
        params = dict(spec_doc.get("params", {}))
        for item in args.param:
            name, _, value = item.partition("=")
            if not _:
                raise ConfigError(f"--param expects name=value, got {item!r}")
            params[name] = float(value)
        spec_doc["params"] = params
    spec = datagen.DynamicsSpec(**spec_doc)
    n = args.nodes if args.nodes is not None else graph_doc.get("n", 100)
    k = args.k if args.k is not None else graph_doc.get("k", 4)
    p = args.p if args.p is not None else graph_doc.get("p", 0.1)
    graph_seed = args.graph_seed if args.graph_seed is not None else graph_doc.get("seed", spec.seed)
    g = datagen.watts_strogatz(n, k, p, seed=graph_seed)
    series = datagen.simulate(g, spec)
    out = datagen.export_dataset(series, g, workdir / args.out, spec,
                                 extra={"graph": {"n": n, "k": k, "p": p, "seed": graph_seed}})
    _emit({"dataset": str(args.out), "n_nodes": n, "n_edges": g.n_edges, "shape": list(series.values.shape),
           "path": str(out)})
    return 0


def cmd_train(args, workdir: Path) -> int:
    cfg, run = resolve(args, workdir)
    g, values, name = _load(run, workdir)
    spec = RunSpec.from_config(values.shape[1], cfg)
    model = PhyHSL(g, values.shape[2], cfg)
    _, report = train(model, values[:, :spec.n_obs], cfg)
    save_checkpoint(workdir / args.checkpoint, model)
    write_rows(workdir / args.history, report.history, ["epoch", "recon", "kl", "total", "grad_norm", "seconds"])
    _emit({"dataset": name, "epochs": cfg.epochs, "final_loss": report.total, "recon": report.recon,
           "kl": report.kl, "checkpoint": args.checkpoint})
    return 0


def cmd_predict(args, workdir: Path) -> int:
    cfg, run = resolve(args, workdir)
    g, values, name = _load(run, workdir)
    model = load_checkpoint(workdir / args.checkpoint, g)
    spec = RunSpec.from_config(values.shape[1], model.cfg, horizon=args.horizon)
    observed = values[:, :spec.n_obs]
    pred, out = model.forecast(observed, spec.horizon, return_output=True,
                               keep_incidence=bool(args.dump_incidence))
    start = spec.n_obs - out.embedding.shape[1]
    rows = [{"node": i, "t": spec.n_obs + h, **{f"value{k}" if pred.shape[2] > 1 else "value": float(pred[i, h, k])
                                                for k in range(pred.shape[2])}}
            for i in range(pred.shape[0]) for h in range(pred.shape[1])]
    cols = ["node", "t"] + (["value"] if pred.shape[2] == 1 else [f"value{k}" for k in range(pred.shape[2])])
    write_rows(workdir / args.out, rows, cols)
    if args.dump_latent:
        z = np.concatenate([out.z_phys.data, out.z_koop.data], axis=-1)
        d = out.z_phys.shape[-1]
        lat_cols = ["node", "t"] + [f"z{k}" for k in range(d)] + [f"zk{k}" for k in range(d)]
        write_rows(workdir / args.dump_latent,
                   [dict(zip(lat_cols, [i, start + t] + [float(v) for v in z[i, t]]))
                    for i in range(z.shape[0]) for t in range(z.shape[1])], lat_cols)
    if args.dump_incidence:
        lam_rows = []
        for layer, lam in enumerate(out.incidences):
            n, T, I = lam.shape
            for i in range(n):
                for t in range(T):
                    lam_rows.append({"layer": layer, "node": i, "t": start + t,
                                     **{f"e{e}": float(lam.data[i, t, e]) for e in range(I)}})
        I = out.incidences[0].shape[2] if out.incidences else 0
        write_rows(workdir / args.dump_incidence, lam_rows, ["layer", "node", "t"] + [f"e{e}" for e in range(I)])
    _emit({"dataset": name, "predictions": args.out, "horizon": spec.horizon, "n_obs": spec.n_obs})
    return 0


def cmd_evaluate(args, workdir: Path) -> int:
    cfg, run = resolve(args, workdir)
    g, values, name = _load(run, workdir)
    res = run_experiment(g, values, cfg, int(run.get("repeats", 10)), norm=run.get("norm", "l2"),
                         workdir=workdir, dataset=name)
    _emit({"dataset": name, "mae_mean": res.mae, "mae_std": res.mae_std, "baseline_mae": res.baseline_mae,
           "repeats": res.repeats, "results": "results.json"})
    return 0


def cmd_ablate(args, workdir: Path) -> int:
    cfg, run = resolve(args, workdir)
    g, values, name = _load(run, workdir)
    rows = ablate(g, values, cfg, int(run.get("repeats", 10)), norm=run.get("norm", "l2"), workdir=workdir)
    _emit({"dataset": name, "table": "ablation.csv", "rows": rows})
    return 0


def cmd_sweep(args, workdir: Path) -> int:
    cfg, run = resolve(args, workdir)
    g, values, name = _load(run, workdir)
    grid = [int(v) for v in args.values.split(",") if v.strip()]
    if not grid:
        raise ConfigError("--values needs at least one integer")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = sweep(g, values, cfg, args.axis, grid, int(run.get("repeats", 10)), norm=run.get("norm", "l2"),
                     workdir=workdir)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    maes = [r["mae"] for r in rows]
    monotone = bool(np.all(np.diff(maes) >= 0)) if len(maes) > 1 else True
    _emit({"dataset": name, "axis": args.axis, "table": "sweep.csv", "rows": rows,
           "skipped": [str(w.message) for w in caught], "mae_nondecreasing": monotone})
    return 0


def cmd_gradcheck(args, workdir: Path) -> int:
    start = time.perf_counter()
    report = model_gradcheck(seed=args.seed or 0, per_param=args.per_param, h=args.h)
    report["seconds"] = time.perf_counter() - start
    report["passed"] = report["max_rel_error"] < args.tol
    _emit(report)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phyhsl", description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default=".", help="base directory for all relative paths")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a synthetic dataset on a Watts-Strogatz graph")
    p.add_argument("--config", help="JSON with DynamicsSpec fields and an optional 'graph' object")
    p.add_argument("--out", default="data")
    p.add_argument("--kind", choices=sorted(datagen.DEFAULT_PARAMS))
    p.add_argument("--nodes", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--graph-seed", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--d-in", dest="d_in", type=int)
    p.add_argument("--param", action="append", help="dynamics parameter override, name=value")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", default="checkpoint.json")
    p.add_argument("--history", default="loss_history.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="forecast the held-out frames from a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", default="checkpoint.json")
    p.add_argument("--out", default="predictions.csv")
    p.add_argument("--dump-latent", dest="dump_latent")
    p.add_argument("--dump-incidence", dest="dump_incidence")
    p.set_defaults(func=cmd_predict)

    for name, func, helptext in (("evaluate", cmd_evaluate, "repeated train + held-out MAE, writes results.json"),
                                 ("ablate", cmd_ablate, "full model and four ablations, writes ablation.csv")):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        p.add_argument("--repeats", type=int)
        p.add_argument("--norm", choices=["l2", "l1"])
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="MAE over training or prediction lengths, writes sweep.csv")
    _add_config_flags(p)
    p.add_argument("--axis", choices=["train_len", "pred_len"], required=True)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--repeats", type=int)
    p.add_argument("--norm", choices=["l2", "l1"])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the whole model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-param", dest="per_param", type=int, default=3)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    workdir = Path(args.workdir)
    try:
        return args.func(args, workdir)
    except (PhyHSLError, OSError, ValueError, KeyError) as exc:
        code = 2 if isinstance(exc, ConfigError) else 1
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
