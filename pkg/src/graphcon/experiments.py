"""Experiment commands behind the CLI. Each writes its artifacts into ``out``."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import checks as C
from . import diagnostics as D
from .artifacts import save_checkpoint, write_csv, write_json
from .coupling import CouplingConfig
from .datasets import Dataset, gen_grid, gen_sbm, load_dataset_dir, save_dataset
from .dynamics import IntegratorConfig
from .graph import grid_graph
from .rng import derive_seed
from .training import (Architecture, ModelConfig, Task, TrainConfig, init_model, random_split, train)

log = logging.getLogger(__name__)

ENERGY_HEADER = ["layer", "model", "alpha", "gamma", "energy"]
HISTORY_HEADER = ["epoch", "train_loss", "val_loss", "val_metric", "test_metric"]
DEPTH_HEADER = ["model", "n_layers", "seed", "best_epoch", "val_metric", "test_metric"]
SENSITIVITY_HEADER = ["sweep", "alpha", "gamma", "n_layers", "seed", "val_metric", "test_metric"]


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def build_dataset(cfg: dict) -> Dataset:
    d = cfg["dataset"]
    if d["kind"] == "sbm":
        return gen_sbm(d["num_nodes"], d["num_communities"], d["p_in"], d["p_out"],
                       derive_seed(cfg["seed"], "dataset"), tuple(d["split_fractions"]))
    if d["kind"] == "dir":
        if not d["dir"]:
            raise ValueError("dataset.kind='dir' needs dataset.dir")
        ds = load_dataset_dir(d["dir"], d["task"])
        if ds.splits is None:
            ds.splits = random_split(ds.graph.num_nodes, tuple(d["split_fractions"]),
                                     derive_seed(cfg["seed"], "split"))
        return ds
    raise ValueError(f"unknown dataset.kind {d['kind']!r}")


def model_config(cfg: dict, ds: Dataset, architecture: str | None = None, n_layers: int | None = None,
                 alpha: float | None = None, gamma: float | None = None) -> ModelConfig:
    arch = Architecture(architecture or cfg["model"]["architecture"])
    task = Task(cfg["dataset"]["task"])
    width = cfg["model"]["hidden_width"]
    ic = dict(cfg["integrator"])
    if n_layers is not None:
        ic["n_layers"] = n_layers
    if alpha is not None:
        ic["alpha"] = alpha
    if gamma is not None:
        ic["gamma"] = gamma
    if arch is Architecture.BASELINE:
        # plain stacked GNN
        ic["dt"], ic["gamma"] = 1.0, 1.0
    cc = dict(cfg["coupling"])
    coupling = CouplingConfig(width=width, num_layers=ic["n_layers"], **cc)
    out = ds.num_classes if task is Task.CLASSIFICATION else ds.targets.shape[1]
    return ModelConfig(ds.features.shape[1], width, out, coupling, IntegratorConfig(**ic), task, arch)


def train_config(cfg: dict, seed: int | None = None) -> TrainConfig:
    return TrainConfig(seed=cfg["seed"] if seed is None else seed, **cfg["train"])


# --- commands --------------------------------------------------------------------


def cmd_gen_grid(cfg: dict, out: str) -> dict:
    e = cfg["energy_profile"]
    ds = gen_grid(e["grid_width"], e["grid_height"], e["width"], cfg["seed"])
    return save_dataset(ds, out)


def cmd_gen_sbm(cfg: dict, out: str) -> dict:
    return save_dataset(build_dataset({**cfg, "dataset": {**cfg["dataset"], "kind": "sbm"}}), out)


def _energy_cell(args):
    cfg, seed = args
    e = cfg["energy_profile"]
    g = grid_graph(e["grid_width"], e["grid_height"])
    rows, summary = [], []
    for model, a, traj in C.energy_profile_runs(seed, (e["grid_width"], e["grid_height"]), e["layers"],
                                                e["width"], tuple(e["alphas"]), e["gamma"], e["dt"],
                                                e["activation"]):
        rep = D.dirichlet_profile(traj, g)
        gamma = None if a is None else e["gamma"]
        for n in range(1, len(rep.energies)):
            rows.append({"layer": n, "model": model, "alpha": a, "gamma": gamma, "energy": rep.energies[n]})
        summary.append({"model": model, "alpha": a, "slope": rep.slope, "ratio": rep.ratio,
                        "oversmoothing": rep.oversmoothing})
    return rows, summary


def cmd_energy_profile(cfg: dict, out: str) -> dict:
    """Layer-wise Dirichlet energy for GCN, GAT and GraphCON-GCN/GAT at each alpha."""
    rows, summary = _energy_cell((cfg, cfg["seed"]))
    path = os.path.join(out, "energy_profile.csv")
    write_csv(path, ENERGY_HEADER, rows)
    write_json(os.path.join(out, "energy_summary.json"), {"seed": cfg["seed"], "runs": summary})
    return {"energy_profile": path, "rows": len(rows)}


def cmd_checks(names: list[str], cfg: dict, out: str | None) -> tuple[int, list[dict]]:
    """Run named checks; returns (exit status, summaries). Unknown names raise KeyError."""
    unknown = [n for n in names if n not in C.CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(C.CHECKS)}")
    ck = cfg["checks"]
    results = []
    for name in names:
        kw = {}
        if name == "grad-bound-check" and ck["grad_bound_dt"] is not None:
            kw["dt"] = ck["grad_bound_dt"]
        if name == "hidden-state-bound-check":
            kw["dt"] = ck["hidden_state_dt"]
        res = C.CHECKS[name](**kw)
        log.info(res.line())
        results.append(res.to_dict())
    if out is not None and names:
        write_json(os.path.join(out, "checks.json"), results)
    return (0 if all(r["pass"] for r in results) else 1), results


def cmd_train(cfg: dict, out: str) -> dict:
    ds = build_dataset(cfg)
    mcfg = model_config(cfg, ds)
    seed = derive_seed(cfg["seed"], "model")
    res = train(init_model(mcfg, seed), ds, ds.splits, train_config(cfg, seed))
    hist = os.path.join(out, "history.csv")
    write_csv(hist, HISTORY_HEADER, res.history)
    ckpt = os.path.join(out, "checkpoint.json")
    save_checkpoint(ckpt, res.model.arrays(), {"best_epoch": res.best_epoch})
    summary = {"best_epoch": res.best_epoch, "val_metric": res.final("val_metric"),
               "test_metric": res.final("test_metric"), "epochs_run": len(res.history)}
    write_json(os.path.join(out, "train_summary.json"), summary)
    return summary


def _train_cell(args):
    cfg, arch, n, alpha, gamma, tag = args
    ds = build_dataset(cfg)
    seed = derive_seed(cfg["seed"], tag, arch, n, repr(alpha), repr(gamma))
    mcfg = model_config(cfg, ds, arch, n, alpha, gamma)
    res = train(init_model(mcfg, seed), ds, ds.splits, train_config(cfg, seed))
    return {"model": arch, "n_layers": n, "seed": seed, "best_epoch": res.best_epoch,
            "val_metric": res.final("val_metric"), "test_metric": res.final("test_metric")}


def cmd_depth_sweep(cfg: dict, out: str, jobs: int = 1) -> list[dict]:
    cells = [(cfg, arch, n, None, None, "depth") for arch in ("graphcon", "baseline")
             for n in cfg["depth_sweep"]["depths"]]
    rows = _map(_train_cell, cells, jobs)
    write_csv(os.path.join(out, "depth_sweep.csv"), DEPTH_HEADER, rows)
    return rows


def sensitivity_grid(s: dict, floor: float | None = None) -> list[float]:
    grid = np.linspace(s["low"], s["high"], s["points"])
    return [float(x) if floor is None else max(float(x), floor) for x in grid]


def cmd_sensitivity_sweep(cfg: dict, out: str, jobs: int = 1) -> list[dict]:
    """GraphCON test metric over an alpha grid (gamma fixed), then a gamma grid (alpha fixed).

    Gamma grid points below ``min_value`` are raised to it, since gamma must
    stay positive; the alpha grid is used as is.
    """
    s = cfg["sensitivity_sweep"]
    alphas = sensitivity_grid(s)
    gammas = sensitivity_grid(s, s["min_value"])
    cells = [(cfg, "graphcon", s["n_layers"], a, s["fixed_gamma"], "sens") for a in alphas]
    cells += [(cfg, "graphcon", s["n_layers"], s["fixed_alpha"], g, "sens") for g in gammas]
    res = _map(_train_cell, cells, jobs)
    rows = []
    for i, (c, r) in enumerate(zip(cells, res)):
        rows.append({"sweep": "alpha" if i < len(alphas) else "gamma", "alpha": c[3], "gamma": c[4],
                     "n_layers": c[2], "seed": r["seed"], "val_metric": r["val_metric"],
                     "test_metric": r["test_metric"]})
    write_csv(os.path.join(out, "sensitivity_sweep.csv"), SENSITIVITY_HEADER, rows)
    return rows
