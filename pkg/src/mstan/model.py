"""Multi-scale temporal alignment network: layers, forward pass and exact backward pass.

Pipeline per item::

    x_t --embed--> h_t --Gaussian time alignment--> h~_t --conv per scale s--> h_t^(s)
        --beta-weighted fusion--> f_t --attention pooling (temperature tau)--> z --sigmoid head--> y_hat

Parameters live in a plain ``dict`` of float64 arrays so that optimizers and
the finite-difference checker can treat them uniformly:

``W_e`` (d_h, d), ``b_e`` (d_h,), ``sigma_raw`` (), ``conv_<s>`` (2s+1, d_h, d_h)
for each scale with index ``k + s`` holding the offset-``k`` matrix,
``beta_logits`` (K,), ``w`` (d_h,), ``tau_raw`` () when tau is learnable,
``W_o`` (1, d_h), ``b_o`` ().

sigma and tau are ``softplus`` of their raw scalars; scale weights are
``softmax(beta_logits)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import numkernel as nk
from .seqdata import FeatureStats, PaddedBatch

Params = Dict[str, np.ndarray]

CHECKPOINT_FORMAT = "mstan-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    d: int
    d_h: int = 32
    scales: Tuple[int, ...] = (1, 3, 7)
    tau: float = 1.0
    tau_learnable: bool = False
    L_max: int = 200
    seed: int = 0
    align: bool = True  # False: alignment replaced by the identity (ablation)

    def __post_init__(self):
        self.scales = tuple(int(s) for s in self.scales)
        self.validate()

    def validate(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.d_h < 1:
            raise ValueError("d_h must be >= 1")
        if not self.scales or any(s < 1 for s in self.scales):
            raise ValueError("scales must be a nonempty list of positive integers")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError("scales must be strictly increasing")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.L_max < 1:
            raise ValueError("L_max must be positive")


@dataclass
class ForwardCache:
    mask: np.ndarray
    x: np.ndarray
    delta_sq: Optional[np.ndarray]
    sigma: float
    H: np.ndarray
    A: Optional[np.ndarray]
    H_tilde: np.ndarray
    H_scales: List[np.ndarray]
    beta: np.ndarray
    H_fused: np.ndarray
    tau: float
    logits: np.ndarray
    gamma: np.ndarray
    z: np.ndarray
    y_hat: np.ndarray
    scales: Tuple[int, ...] = field(default_factory=tuple)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: ModelConfig) -> Params:
    rng = np.random.default_rng(config.seed)
    d, d_h = config.d, config.d_h
    p: Params = {
        "W_e": _glorot(rng, (d_h, d), d, d_h),
        "b_e": np.zeros(d_h),
        "sigma_raw": np.array(nk.softplus_inverse(1.0)),
    }
    for s in config.scales:
        width = 2 * s + 1
        p[f"conv_{s}"] = _glorot(rng, (width, d_h, d_h), width * d_h, width * d_h)
    p["beta_logits"] = np.zeros(len(config.scales))
    p["w"] = _glorot(rng, (d_h,), d, d_h)
    if config.tau_learnable:
        p["tau_raw"] = np.array(nk.softplus_inverse(config.tau))
    p["W_o"] = _glorot(rng, (1, d_h), d_h, 1)
    p["b_o"] = np.array(0.0)
    return p


def sigma_of(params: Params) -> float:
    return nk.softplus(params["sigma_raw"])


def tau_of(params: Params, config: ModelConfig) -> float:
    if config.tau_learnable:
        return nk.softplus(params["tau_raw"])
    return config.tau


def beta_of(params: Params) -> np.ndarray:
    return nk.softmax_rows(params["beta_logits"])


# ---------------------------------------------------------------------------
# layers


def embed(values: np.ndarray, seq_mask: np.ndarray, W_e: np.ndarray, b_e: np.ndarray) -> np.ndarray:
    if values.shape[-1] != W_e.shape[1]:
        raise nk.ShapeError(f"embed: input dim {values.shape[-1]} but W_e is {W_e.shape}")
    H = values @ W_e.T + b_e
    return H * seq_mask[..., None]


def time_gaps_sq(timestamps: np.ndarray) -> np.ndarray:
    diff = timestamps[:, :, None] - timestamps[:, None, :]
    return diff * diff


def align_weights(timestamps: np.ndarray, seq_mask: np.ndarray, sigma: float) -> np.ndarray:
    """Row-stochastic Gaussian-kernel weights over unmasked source steps, (B, L, L)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    logits = -time_gaps_sq(timestamps) / (2.0 * sigma * sigma)
    return nk.softmax_rows(logits, seq_mask[:, None, :])


def apply_alignment(A: np.ndarray, H: np.ndarray) -> np.ndarray:
    if A.ndim != 3 or A.shape[:2] != H.shape[:2] or A.shape[2] != H.shape[1]:
        raise nk.ShapeError(f"apply_alignment: A {A.shape} incompatible with H {H.shape}")
    return A @ H


def multiscale_conv(H_tilde: np.ndarray, s: int, W: np.ndarray, seq_mask: np.ndarray) -> np.ndarray:
    """Out[b, t] = sum_k W[k + s] @ H_tilde[b, t + k] for k in [-s, s].

    Positions outside the sequence and padded steps contribute zero.
    """
    B, L, d_h = H_tilde.shape
    if W.shape != (2 * s + 1, d_h, d_h):
        raise nk.ShapeError(f"multiscale_conv: scale {s} expects kernels {(2 * s + 1, d_h, d_h)}, got {W.shape}")
    P = _pad_time(H_tilde * seq_mask[..., None], s)
    out = np.zeros((B, L, W.shape[1]))
    for j in range(2 * s + 1):
        out += P[:, j:j + L] @ W[j].T
    return out


def _pad_time(H: np.ndarray, s: int) -> np.ndarray:
    B, L, d_h = H.shape
    P = np.zeros((B, L + 2 * s, d_h))
    P[:, s:s + L] = H
    return P


def fuse_scales(H_scales: List[np.ndarray], beta_logits: np.ndarray) -> np.ndarray:
    if len(H_scales) != beta_logits.shape[0] or not H_scales:
        raise nk.ShapeError("fuse_scales: need one logit per scale output")
    shape = H_scales[0].shape
    if any(h.shape != shape for h in H_scales):
        raise nk.ShapeError("fuse_scales: scale outputs differ in shape")
    beta = nk.softmax_rows(beta_logits)
    return sum(b * h for b, h in zip(beta, H_scales))


def attention_pool(H_fused: np.ndarray, w: np.ndarray, tau: float, seq_mask: np.ndarray):
    """Return ``(z, gamma)`` with gamma = masked softmax of (H_fused @ w) / tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if w.shape != (H_fused.shape[-1],):
        raise nk.ShapeError(f"attention_pool: w {w.shape} vs hidden dim {H_fused.shape[-1]}")
    gamma = nk.softmax_rows((H_fused @ w) / tau, seq_mask)
    z = np.einsum("bl,blh->bh", gamma, H_fused)
    return z, gamma


def predict_risk(z: np.ndarray, W_o: np.ndarray, b_o) -> np.ndarray:
    if W_o.shape != (1, z.shape[-1]):
        raise nk.ShapeError(f"predict_risk: W_o {W_o.shape} vs z {z.shape}")
    return nk.sigmoid(z @ W_o[0] + float(b_o))


def attention_entropy(gamma: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each item's attention weights."""
    g = np.where(gamma > 0, gamma, 1.0)
    return -np.sum(gamma * np.log(g), axis=-1)


# ---------------------------------------------------------------------------
# full network


def forward(params: Params, batch: PaddedBatch, config: ModelConfig, tau: Optional[float] = None):
    """Run the network on ``batch``; returns ``(y_hat, cache)``.

    ``tau`` overrides the configured temperature for a frozen-parameter sweep.
    """
    mask = batch.seq_mask
    if not np.all(mask.any(axis=1)):
        raise ValueError("every batch item needs at least one real step")
    H = embed(batch.values, mask, params["W_e"], params["b_e"])
    sigma = sigma_of(params)
    if config.align:
        delta_sq = time_gaps_sq(batch.timestamps)
        A = nk.softmax_rows(-delta_sq / (2.0 * sigma * sigma), mask[:, None, :])
        H_tilde = apply_alignment(A, H) * mask[..., None]
    else:
        delta_sq, A = None, None
        H_tilde = H
    H_scales = [multiscale_conv(H_tilde, s, params[f"conv_{s}"], mask) for s in config.scales]
    beta = beta_of(params)
    H_fused = sum(b * h for b, h in zip(beta, H_scales))
    if tau is None:
        tau = tau_of(params, config)
    logits = (H_fused @ params["w"]) / tau
    gamma = nk.softmax_rows(logits, mask)
    z = np.einsum("bl,blh->bh", gamma, H_fused)
    y_hat = predict_risk(z, params["W_o"], params["b_o"])
    cache = ForwardCache(mask, batch.values, delta_sq, sigma, H, A, H_tilde, H_scales, beta,
                         H_fused, tau, logits, gamma, z, y_hat, tuple(config.scales))
    return y_hat, cache


def backward(params: Params, cache: ForwardCache, d_y_hat: np.ndarray, config: ModelConfig) -> Params:
    """Gradients of the loss w.r.t. every entry of ``params`` given dL/dy_hat."""
    if tuple(config.scales) != cache.scales or params["W_e"].shape[0] != cache.H.shape[-1]:
        raise ValueError("cache was produced by a different model configuration")
    d_y_hat = np.asarray(d_y_hat, dtype=np.float64)
    if d_y_hat.shape != cache.y_hat.shape:
        raise nk.ShapeError("d_y_hat must match y_hat")
    mask = cache.mask
    m3 = mask[..., None]
    g: Params = {}

    # head
    y = cache.y_hat
    d_out = d_y_hat * y * (1.0 - y)
    g["W_o"] = (d_out @ cache.z)[None, :]
    g["b_o"] = np.array(d_out.sum())
    dz = np.outer(d_out, params["W_o"][0])

    # attention pooling
    Hf, gamma, tau = cache.H_fused, cache.gamma, cache.tau
    d_gamma = np.einsum("bh,blh->bl", dz, Hf)
    d_logits = nk.softmax_rows_backward(gamma, d_gamma)
    dHf = gamma[..., None] * dz[:, None, :] + d_logits[..., None] * (params["w"] / tau)
    g["w"] = np.einsum("bl,blh->h", d_logits, Hf) / tau
    if config.tau_learnable:
        d_tau = -np.sum(d_logits * cache.logits) / tau
        g["tau_raw"] = np.array(nk.softplus_backward(params["tau_raw"], d_tau))

    # scale fusion
    beta = cache.beta
    d_beta = np.array([np.sum(dHf * h) for h in cache.H_scales])
    g["beta_logits"] = nk.softmax_rows_backward(beta, d_beta)

    # convolutions
    B, L, d_h = cache.H_tilde.shape
    Ht_masked = cache.H_tilde * m3
    dHt = np.zeros_like(cache.H_tilde)
    for s, b_s in zip(config.scales, beta):
        W = params[f"conv_{s}"]
        dHs = b_s * dHf
        P = _pad_time(Ht_masked, s)
        dP = np.zeros_like(P)
        dW = np.empty_like(W)
        flat_d = dHs.reshape(-1, d_h)
        for j in range(2 * s + 1):
            dW[j] = flat_d.T @ P[:, j:j + L].reshape(-1, d_h)
            dP[:, j:j + L] += dHs @ W[j]
        g[f"conv_{s}"] = dW
        dHt += dP[:, s:s + L]
    dHt *= m3

    # alignment
    if config.align:
        A = cache.A
        dH = np.swapaxes(A, 1, 2) @ dHt
        dA = dHt @ np.swapaxes(cache.H, 1, 2)
        d_align_logits = nk.softmax_rows_backward(A, dA)
        sigma = cache.sigma
        d_sigma = np.sum(d_align_logits * cache.delta_sq) / sigma ** 3
        g["sigma_raw"] = np.array(nk.softplus_backward(params["sigma_raw"], d_sigma))
    else:
        dH = dHt
        g["sigma_raw"] = np.array(0.0)

    # embedding
    dH = dH * m3
    g["W_e"] = np.einsum("blh,bld->hd", dH, cache.x)
    g["b_e"] = dH.sum(axis=(0, 1))
    return {k: g[k] for k in params}


def predict(params: Params, config: ModelConfig, batches, tau: Optional[float] = None) -> np.ndarray:
    return np.concatenate([forward(params, b, config, tau)[0] for b in batches])


# ---------------------------------------------------------------------------
# checkpoint


def _config_to_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["scales"] = list(config.scales)
    return d


def save_checkpoint(path, config: ModelConfig, params: Params,
                    stats: Optional[FeatureStats] = None, schema: Optional[List[str]] = None) -> None:
    """Write a versioned JSON checkpoint.

    Floats are serialized with ``repr`` precision, so a reload is bit-exact and
    equal inputs always give byte-identical files.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": _config_to_dict(config),
        "params": {k: {"shape": list(v.shape), "data": np.ravel(v).tolist()} for k, v in params.items()},
        "feature_stats": stats.to_dict() if stats is not None else None,
        "schema": list(schema) if schema is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Return ``(config, params, stats, schema)`` from :func:`save_checkpoint` output."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an MSTAN checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = ModelConfig(**doc["config"])
    params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    expected = init_params(config)
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in params):
        raise ValueError(f"{path}: parameter tensors do not match the stored config")
    stats = FeatureStats.from_dict(doc["feature_stats"]) if doc.get("feature_stats") else None
    return config, params, stats, doc.get("schema")
