"""Sensitivity sweeps over the attention temperature and the maximum sequence length.

Each grid point trains a fresh model (fresh optimizer state) on the same data,
split and seed, then scores the test split.
"""

from __future__ import annotations

import csv
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import model as M
from .config import RunConfig
from .metrics import evaluate
from .seqdata import Dataset, FeatureStats, preprocess
from .training import batches, prepare_splits, train

TAU_GRID = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0)
LMAX_GRID = (25, 50, 100, 150, 200, 250, 300)

SWEEP_FIELDS = ["accuracy", "precision", "recall", "f1", "attention_entropy", "best_epoch", "config_hash"]


def mean_attention_entropy(params, config: M.ModelConfig, data: Dataset, tau: Optional[float] = None) -> float:
    ents = []
    for b in batches(data, config.L_max, 64):
        _, cache = M.forward(params, b, config, tau)
        ents.append(M.attention_entropy(cache.gamma))
    return float(np.mean(np.concatenate(ents)))


def train_and_score(cfg: RunConfig, dataset: Dataset, **model_overrides) -> dict:
    mc = cfg.model_config(**model_overrides)
    tc = cfg.train_config()
    params, history = train(mc, tc, dataset)
    splits, _, _ = prepare_splits(dataset, tc)
    test = splits["test"] if len(splits["test"]) else splits["val"]
    y_hat = M.predict(params, mc, batches(test, mc.L_max, 64))
    report = evaluate(y_hat, test.labels, cfg.threshold)
    return {
        "accuracy": report.accuracy, "precision": report.precision, "recall": report.recall,
        "f1": report.f1, "attention_entropy": mean_attention_entropy(params, mc, test),
        "best_epoch": history.best_epoch, "config_hash": cfg.config_hash(),
        "params": params, "history": history, "report": report,
    }


def sweep_tau(cfg: RunConfig, dataset: Dataset, grid: Sequence[float] = TAU_GRID) -> List[dict]:
    rows = []
    for tau in grid:
        res = train_and_score(cfg, dataset, tau=float(tau), tau_learnable=False)
        rows.append({"tau": float(tau), **res})
    return rows


def sweep_tau_frozen(params, config: M.ModelConfig, stats: FeatureStats, dataset: Dataset,
                     grid: Sequence[float] = TAU_GRID, threshold: float = 0.5,
                     config_hash: str = "") -> List[dict]:
    """Score one fixed checkpoint at each temperature; no retraining."""
    data = preprocess(dataset, stats)
    rows = []
    for tau in grid:
        y_hat = M.predict(params, config, batches(data, config.L_max, 64), tau=float(tau))
        report = evaluate(y_hat, data.labels, threshold)
        rows.append({"tau": float(tau), "accuracy": report.accuracy, "precision": report.precision,
                     "recall": report.recall, "f1": report.f1,
                     "attention_entropy": mean_attention_entropy(params, config, data, float(tau)),
                     "best_epoch": -1, "config_hash": config_hash})
    return rows


def sweep_lmax(cfg: RunConfig, dataset: Dataset, grid: Sequence[int] = LMAX_GRID) -> List[dict]:
    rows = []
    for lmax in grid:
        res = train_and_score(cfg, dataset, L_max=int(lmax))
        rows.append({"lmax": int(lmax), **res})
    return rows


def write_rows(path, key: str, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key] + SWEEP_FIELDS)
        for r in rows:
            w.writerow([r[key]] + [r[f] for f in SWEEP_FIELDS])
