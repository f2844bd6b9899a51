"""Objective, optimizers, the training loop and the full-model gradient check."""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from . import numkernel as nk
from .metrics import MetricsReport, evaluate
from .seqdata import Dataset, FeatureStats, PaddedBatch, make_batch, preprocess

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 10
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    max_seconds: Optional[float] = None  # wall-clock cap; None = unlimited

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if len(self.split) != 3 or any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must be three non-negative numbers summing to 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_metrics: List[MetricsReport] = field(default_factory=list)
    best_epoch: int = -1
    stats: Optional[FeatureStats] = None
    split: Dict[str, np.ndarray] = field(default_factory=dict)

    CSV_HEADER = ["epoch", "train_loss", "val_loss", "val_acc", "val_precision", "val_recall", "val_f1"]

    def rows(self):
        for e, (tl, vl, m) in enumerate(zip(self.train_loss, self.val_loss, self.val_metrics)):
            yield [e, tl, vl, *m.csv_row()]

    @property
    def best_f1(self) -> float:
        return self.val_metrics[self.best_epoch].f1 if self.best_epoch >= 0 else 0.0


# ---------------------------------------------------------------------------
# objective and optimizers


def bce_loss(y_hat, y) -> Tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. ``y_hat``."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.shape} vs {y.shape}")
    p = np.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = y.size
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    grad = (-(y / p) + (1.0 - y) / (1.0 - p)) / n
    # clipping makes the loss flat outside the clamp range
    grad = np.where((y_hat < PROB_CLAMP) | (y_hat > 1.0 - PROB_CLAMP), 0.0, grad)
    return float(loss), grad


class Optimizer:
    """SGD or bias-corrected Adam over a parameter dict, updating in place."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: M.Params, grads: M.Params) -> None:
        optimizer_step(params, grads, self, self.config)


def optimizer_step(params: M.Params, grads: M.Params, state: Optimizer, config: TrainConfig) -> None:
    lr = config.learning_rate
    for k, g in grads.items():
        if params[k].shape != np.shape(g):
            raise nk.ShapeError(f"gradient for {k} has shape {np.shape(g)}, parameter {params[k].shape}")
    if config.optimizer == "sgd":
        for k, g in grads.items():
            params[k] = params[k] - lr * g
        return
    state.t += 1
    b1, b2, eps = config.beta1, config.beta2, config.adam_eps
    for k, g in grads.items():
        m = state.m.get(k, np.zeros_like(params[k]))
        v = state.v.get(k, np.zeros_like(params[k]))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# data handling


def stratified_split(labels: np.ndarray, fractions: Sequence[float], seed: int) -> Dict[str, np.ndarray]:
    """Per-class shuffled split into train/val/test index arrays (sorted)."""
    rng = np.random.default_rng(seed)
    parts = {"train": [], "val": [], "test": []}
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fractions[0] * idx.size))
        n_val = int(round(fractions[1] * idx.size))
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {k: np.sort(np.concatenate(v)) for k, v in parts.items()}


def batches(dataset: Dataset, L_max: int, batch_size: int, order: Optional[np.ndarray] = None) -> List[PaddedBatch]:
    if order is None:
        order = np.arange(len(dataset))
    return [make_batch([dataset.items[i] for i in order[k:k + batch_size]], L_max)
            for k in range(0, len(order), batch_size)]


def predict_dataset(params: M.Params, config: M.ModelConfig, dataset: Dataset,
                    batch_size: int = 64, tau: Optional[float] = None) -> np.ndarray:
    if len(dataset) == 0:
        return np.zeros(0)
    return M.predict(params, config, batches(dataset, config.L_max, batch_size), tau)


def prepare_splits(dataset: Dataset, train_config: TrainConfig):
    """Split, fit the standardizer on train only, and preprocess every split."""
    labels = dataset.labels
    split = stratified_split(labels, train_config.split, train_config.seed)
    train_raw = dataset.subset(split["train"])
    if len(set(train_raw.labels.tolist())) < 2:
        raise ValueError("training split must contain both classes")
    stats = preprocess(train_raw).feature_stats
    out = {name: preprocess(dataset.subset(idx), stats) for name, idx in split.items()}
    return out, stats, split


# ---------------------------------------------------------------------------
# training loop


def train_epoch(params, model_config, data: Dataset, train_config: TrainConfig,
                opt: Optimizer, rng: np.random.Generator) -> float:
    order = rng.permutation(len(data))
    total, count = 0.0, 0
    for batch in batches(data, model_config.L_max, train_config.batch_size, order):
        y_hat, cache = M.forward(params, batch, model_config)
        loss, d_y = bce_loss(y_hat, batch.labels)
        grads = M.backward(params, cache, d_y, model_config)
        opt.step(params, grads)
        total += loss * y_hat.size
        count += y_hat.size
    return total / count


def evaluate_split(params, model_config, data: Dataset, threshold: float = 0.5):
    y_hat = predict_dataset(params, model_config, data)
    loss, _ = bce_loss(y_hat, data.labels)
    return loss, evaluate(y_hat, data.labels, threshold)


def train(model_config: M.ModelConfig, train_config: TrainConfig, dataset: Dataset,
          callback: Optional[Callable[[int, TrainHistory], None]] = None):
    """Train on the train split with early stopping on validation F1.

    Returns ``(params, history)``; ``params`` are those of the best validation
    epoch. ``history.stats`` holds the training-split standardizer and
    ``history.split`` the index arrays of each split in ``dataset``.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    splits, stats, split_idx = prepare_splits(dataset, train_config)
    train_data, val_data = splits["train"], splits["val"]
    if len(val_data) == 0:
        val_data = train_data
    params = M.init_params(model_config)
    opt = Optimizer(train_config)
    rng = np.random.default_rng([train_config.seed, 1])
    history = TrainHistory(stats=stats, split=split_idx)
    best_params = copy.deepcopy(params)
    best_key = None
    stale = 0
    started = time.perf_counter()
    for epoch in range(train_config.epochs):
        train_loss = train_epoch(params, model_config, train_data, train_config, opt, rng)
        val_loss, report = evaluate_split(params, model_config, val_data)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.val_metrics.append(report)
        key = (report.f1, -val_loss)
        if best_key is None or key > best_key:
            best_key, history.best_epoch = key, epoch
            best_params = copy.deepcopy(params)
            stale = 0
        else:
            stale += 1
        log.info("epoch %d train_loss=%.4f val_loss=%.4f val_f1=%.4f", epoch, train_loss, val_loss, report.f1)
        if callback is not None:
            callback(epoch, history)
        if stale >= train_config.early_stop_patience:
            break
        if train_config.max_seconds is not None and time.perf_counter() - started > train_config.max_seconds:
            log.info("stopping: wall-clock budget of %.0fs used", train_config.max_seconds)
            break
    return best_params, history


def fit_memorize(model_config: M.ModelConfig, train_config: TrainConfig, dataset: Dataset):
    """Train on every item of ``dataset`` with no held-out split or early stopping.

    Returns ``(params, losses)`` with the mean training loss of each epoch.
    """
    data = preprocess(dataset)
    params = M.init_params(model_config)
    opt = Optimizer(train_config)
    rng = np.random.default_rng([train_config.seed, 1])
    losses = [train_epoch(params, model_config, data, train_config, opt, rng)
              for _ in range(train_config.epochs)]
    return params, losses


# ---------------------------------------------------------------------------
# gradient check


def tiny_problem(model_config: M.ModelConfig, seed: int, B: int = 2, L: int = 5):
    """Random parameters and a padded batch (second item shorter) for gradient checks."""
    rng = np.random.default_rng(seed)
    params = M.init_params(model_config)
    for k in params:
        params[k] = params[k] + rng.uniform(-0.5, 0.5, np.shape(params[k]))
    x = rng.uniform(-1.0, 1.0, (B, L, model_config.d))
    t = np.cumsum(rng.uniform(0.2, 2.0, (B, L)), axis=1)
    mask = np.ones((B, L), dtype=bool)
    if B > 1 and L > 2:
        mask[1, L - 2:] = False
        x[1, L - 2:] = 0.0
        t[1, L - 2:] = t[1, L - 3]
    y = (np.arange(B) % 2 == 0).astype(np.float64)
    return params, PaddedBatch(x, t, mask, y)


def grad_check(model_config: M.ModelConfig, seed: int = 0, eps: float = 1e-5,
               backward_fn: Callable = M.backward) -> float:
    """Worst relative error between ``backward_fn`` and central differences of BCE."""
    params, batch = tiny_problem(model_config, seed)

    def objective(p):
        y_hat, _ = M.forward(p, batch, model_config)
        return bce_loss(y_hat, batch.labels)[0]

    y_hat, cache = M.forward(params, batch, model_config)
    _, d_y = bce_loss(y_hat, batch.labels)
    analytic = backward_fn(params, cache, d_y, model_config)
    numeric = nk.finite_diff_grad(objective, params, eps)
    return max(nk.max_relative_error(analytic[k], numeric[k]) for k in params)
