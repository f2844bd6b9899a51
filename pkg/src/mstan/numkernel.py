"""Dense float64 primitives with paired forward/backward rules.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Every
``*_backward`` function takes the upstream gradient of the op's output and
returns gradients for its inputs, in argument order.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np


class ShapeError(ValueError):
    pass


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: cannot apply {M.shape} to {v.shape}")
    return M @ v


def matvec_backward(M, v, g):
    return np.outer(g, v), M.T @ g


def matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Batched matrix product over the last two axes; leading axes must agree."""
    if A.ndim < 2 or B.ndim < 2 or A.shape[-1] != B.shape[-2] or A.shape[:-2] != B.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {A.shape} and {B.shape}")
    return A @ B


def matmul_backward(A, B, g):
    return g @ np.swapaxes(B, -1, -2), np.swapaxes(A, -1, -2) @ g


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_shapes(a, b, "add")
    return a + b


def add_backward(a, b, g):
    return g, g


def scale(a: np.ndarray, c: float) -> np.ndarray:
    return c * a


def scale_backward(a, c, g):
    return c * g, float(np.sum(g * a))


def elementwise_exp(a: np.ndarray) -> np.ndarray:
    return np.exp(a)


def elementwise_exp_backward(a, g):
    return g * np.exp(a)


def sigmoid(x):
    # Branch on sign so neither exp() overflows.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_backward(x, g):
    s = sigmoid(x)
    return g * s * (1.0 - s)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.logaddexp(0.0, x)
    return out if out.ndim else float(out)


def softplus_inverse(y: float) -> float:
    if y <= 0:
        raise ValueError("softplus_inverse needs y > 0")
    # log(exp(y) - 1), written to stay accurate for large y
    return float(y + np.log(-np.expm1(-y)))


def softplus_backward(x, g):
    return g * sigmoid(x)


def softmax_rows(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax along the last axis.

    ``mask`` (bool, broadcastable to ``x``) marks entries that take part;
    excluded entries get weight exactly 0. Each row needs one allowed entry.
    """
    x = np.asarray(x, dtype=np.float64)
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("softmax_rows: a row has every entry masked")
    shifted = np.where(mask, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the logits given the softmax output ``p``.

    Masked entries have p == 0, so they receive exactly zero gradient.
    """
    return p * (g - np.sum(g * p, axis=-1, keepdims=True))


def finite_diff_grad(
    f: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
) -> Dict[str, np.ndarray]:
    """Central-difference gradient of scalar ``f`` for every coordinate of ``params``.

    Entries of ``params`` are temporarily replaced with perturbed copies and
    restored before returning.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = {}
    for name in list(params):
        orig = np.array(params[name], dtype=np.float64)
        flat = orig.reshape(-1).copy()
        g = np.zeros(flat.shape)
        try:
            for i in range(flat.size):
                v = flat[i]
                flat[i] = v + eps
                params[name] = flat.reshape(orig.shape).copy()
                f_plus = f(params)
                flat[i] = v - eps
                params[name] = flat.reshape(orig.shape).copy()
                f_minus = f(params)
                flat[i] = v
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise FloatingPointError(f"non-finite objective while perturbing {name}[{i}]")
                g[i] = (f_plus - f_minus) / (2.0 * eps)
        finally:
            params[name] = orig
        grads[name] = g.reshape(orig.shape)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a| + |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    _check_shapes(a, n, "max_relative_error")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))
