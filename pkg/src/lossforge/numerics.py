"""Dense float64 kernels, stable probability transforms, and the
central-difference gradient oracle used by the test suite.

All public operations work on 64-bit floats; batch data is carried as
row-major 2-D arrays (rows = samples).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

#: Floor applied to probabilities before any logarithm.
PROB_FLOOR = 1e-12

#: Default central-difference step.
FD_STEP = 1e-5


class ShapeError(ValueError):
    """Operand dimensions do not chain or match."""


class NonFiniteError(ValueError):
    """A value that must be finite is NaN or infinite."""


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def as_dense2(a, name: str = "array") -> np.ndarray:
    """Validate and return a row-major 2-D float64 array with finite entries."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return check_finite(a, name)


def softmax(o: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by max subtraction.

    Accepts a vector or a batch of row vectors; output rows are positive
    and sum to 1.
    """
    o = check_finite(np.asarray(o, dtype=np.float64), "softmax input")
    z = o - np.max(o, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(o: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, overflow-safe on both tails."""
    o = check_finite(np.asarray(o, dtype=np.float64), "sigmoid input")
    out = np.empty_like(o)
    pos = o >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-o[pos]))
    e = np.exp(o[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def clamp_probs(p: np.ndarray, floor: float = PROB_FLOOR) -> np.ndarray:
    """Clip probabilities into [floor, 1] before taking logarithms."""
    return np.clip(p, floor, 1.0)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient (f(x+h e_j) - f(x-h e_j)) / 2h.

    The independent oracle against which every analytic gradient in this
    package is checked.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for j in range(xf.size):
        step = np.zeros_like(xf)
        step[j] = h
        grad_j = (f((xf + step).reshape(x.shape)) - f((xf - step).reshape(x.shape))) / (2.0 * h)
        flat[j] = grad_j
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """max_j |a_j - b_j| / max(1, |a_j|, |b_j|), the gradient-check metric."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"rel_err shapes differ: {a.shape} vs {b.shape}")
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul mismatch: {a.shape} @ {b.shape}")
    return a @ b


def add_bias(a: np.ndarray, bias: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.ndim != 1 or a.ndim != 2 or a.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias mismatch: {a.shape} + {bias.shape}")
    return a + bias


def transpose(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects 2-D, got {a.shape}")
    return a.T


def argmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest index."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"argmax_rows expects 2-D, got {a.shape}")
    return np.argmax(a, axis=1)
