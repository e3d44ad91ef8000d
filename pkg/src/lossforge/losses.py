"""The twelve classification losses, each as a (batch-mean value, analytic
gradient w.r.t. the final-layer output) pair, plus executable verifiers for
the identities the library is built around.

Conventions
-----------
* ``y`` is a batch of one-hot rows, ``o`` the matching batch of raw network
  outputs, ``p = sigma(o)`` a probability estimate (softmax over the row, or
  an elementwise sigmoid).
* Values are arithmetic means over the batch; gradients are derivatives of
  that mean, so they carry the 1/N factor.
* Losses that consume probabilities compute an upstream gradient g = dv/dp
  and chain it through sigma in closed form:
  softmax rows:  do_k = p_k (g_k - <g, p>)
  sigmoid:       do_k = g_k p_k (1 - p_k)
* Probabilities are floored at ``numerics.PROB_FLOOR`` before any log.
* Subgradient conventions at kinks: sign(0) = 0, hinge contributes 0 at the
  margin boundary, Chebyshev ties route to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import (
    PROB_FLOOR,
    ShapeError,
    as_dense2,
    clamp_probs,
    finite_diff_grad,
    rel_err,
    sigmoid,
    softmax,
)
from .rng import Rng

DEFAULT_HINGE_MARGIN = 0.5


class DistributionError(ValueError):
    """A row that must be a probability distribution is not."""


class LossId(str, Enum):
    L1 = "l1"
    L2 = "l2"
    EXPECTATION_L1 = "expectation_l1"
    EXPECTATION_L2 = "expectation_l2"
    CHEBYSHEV = "chebyshev"
    HINGE = "hinge"
    HINGE2 = "hinge2"
    HINGE3 = "hinge3"
    LOG = "log"
    LOG2 = "log2"
    TANIMOTO = "tanimoto"
    CAUCHY_SCHWARZ = "cauchy_schwarz"

    def __str__(self) -> str:  # path segments, CLI output
        return self.value


@dataclass(frozen=True)
class LossSpec:
    """Static metadata for one loss id."""

    loss_id: LossId
    input_domain: str  # "raw" (consumes o) | "prob" (consumes sigma(o))
    label_encoding: str  # "onehot" | "sign"
    sigma: str | None  # default probability transform, None for raw losses


LOSS_SPECS: dict[LossId, LossSpec] = {
    LossId.L1: LossSpec(LossId.L1, "raw", "onehot", None),
    LossId.L2: LossSpec(LossId.L2, "raw", "onehot", None),
    LossId.EXPECTATION_L1: LossSpec(LossId.EXPECTATION_L1, "prob", "onehot", "softmax"),
    LossId.EXPECTATION_L2: LossSpec(LossId.EXPECTATION_L2, "prob", "onehot", "softmax"),
    LossId.CHEBYSHEV: LossSpec(LossId.CHEBYSHEV, "prob", "onehot", "softmax"),
    LossId.HINGE: LossSpec(LossId.HINGE, "raw", "sign", None),
    LossId.HINGE2: LossSpec(LossId.HINGE2, "raw", "sign", None),
    LossId.HINGE3: LossSpec(LossId.HINGE3, "raw", "sign", None),
    LossId.LOG: LossSpec(LossId.LOG, "prob", "onehot", "softmax"),
    LossId.LOG2: LossSpec(LossId.LOG2, "prob", "onehot", "softmax"),
    LossId.TANIMOTO: LossSpec(LossId.TANIMOTO, "prob", "onehot", "softmax"),
    LossId.CAUCHY_SCHWARZ: LossSpec(LossId.CAUCHY_SCHWARZ, "prob", "onehot", "softmax"),
}

ALL_LOSS_IDS: tuple[LossId, ...] = tuple(LOSS_SPECS)


@dataclass
class LossEval:
    """Batch-mean loss value and its gradient w.r.t. the raw outputs."""

    value: float
    grad: np.ndarray


def _check_pair(y: np.ndarray, o: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = as_dense2(y, "labels")
    o = as_dense2(o, "outputs")
    if y.shape != o.shape:
        raise ShapeError(f"label/output shapes differ: {y.shape} vs {o.shape}")
    return y, o


def _apply_sigma(o: np.ndarray, sigma: str) -> np.ndarray:
    if sigma == "softmax":
        return softmax(o)
    if sigma == "sigmoid":
        return sigmoid(o)
    raise ValueError(f"unknown sigma {sigma!r} (expected 'softmax' or 'sigmoid')")


def _chain(g_p: np.ndarray, p: np.ndarray, sigma: str) -> np.ndarray:
    """Closed-form Jacobian-vector product of sigma, applied rowwise."""
    if sigma == "softmax":
        return p * (g_p - np.sum(g_p * p, axis=1, keepdims=True))
    return g_p * p * (1.0 - p)


def lp_loss(order: int, y: np.ndarray, o: np.ndarray) -> LossEval:
    """Raw L1 / L2 distance between the one-hot label and the output.

    order 1: sum_j |y_j - o_j|,    dv/do = sign(o - y)
    order 2: sum_j (y_j - o_j)^2,  dv/do = 2 (o - y)
    """
    y, o = _check_pair(y, o)
    n = y.shape[0]
    d = o - y
    if order == 1:
        value = np.mean(np.sum(np.abs(d), axis=1))
        grad = np.sign(d) / n
    elif order == 2:
        value = np.mean(np.sum(d * d, axis=1))
        grad = 2.0 * d / n
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    return LossEval(float(value), grad)


def expectation_loss(order: int, y: np.ndarray, o: np.ndarray,
                     sigma: str = "softmax") -> LossEval:
    """L1 / squared-L2 distance taken on p = sigma(o) instead of o.

    Upstream gradients are sign(p - y) and 2 (p - y); both are chained
    through the full sigma Jacobian.
    """
    y, o = _check_pair(y, o)
    n = y.shape[0]
    p = _apply_sigma(o, sigma)
    d = p - y
    if order == 1:
        value = np.mean(np.sum(np.abs(d), axis=1))
        g_p = np.sign(d)
    elif order == 2:
        value = np.mean(np.sum(d * d, axis=1))
        g_p = 2.0 * d
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    return LossEval(float(value), _chain(g_p, p, sigma) / n)


def chebyshev_loss(y: np.ndarray, o: np.ndarray, sigma: str = "softmax") -> LossEval:
    """Largest per-coordinate error max_j |p_j - y_j|.

    The subgradient flows only through the attaining coordinate (lowest
    index on ties): g_p = sign(p_m - y_m) e_m.
    """
    y, o = _check_pair(y, o)
    n, k = y.shape
    p = _apply_sigma(o, sigma)
    d = p - y
    absd = np.abs(d)
    m = np.argmax(absd, axis=1)
    rows = np.arange(n)
    value = np.mean(absd[rows, m])
    g_p = np.zeros_like(p)
    g_p[rows, m] = np.sign(d[rows, m])
    return LossEval(float(value), _chain(g_p, p, sigma) / n)


def hinge_loss(power: int, y_sign: np.ndarray, o: np.ndarray,
               margin: float = DEFAULT_HINGE_MARGIN) -> LossEval:
    """Margin loss sum_j max(0, margin - yhat_j o_j)^power on raw outputs.

    dv/do_j = -power * yhat_j * max(0, margin - yhat_j o_j)^(power-1),
    zero at and beyond the margin boundary.
    """
    y_sign, o = _check_pair(y_sign, o)
    if not np.all(np.abs(y_sign) == 1.0):
        raise ValueError("sign labels must be +1 or -1")
    if power not in (1, 2, 3):
        raise ValueError(f"power must be 1, 2 or 3, got {power}")
    n = o.shape[0]
    viol = margin - y_sign * o
    active = viol > 0.0
    vpos = np.where(active, viol, 0.0)
    value = np.mean(np.sum(vpos ** power, axis=1))
    if power == 1:
        grad = np.where(active, -y_sign, 0.0) / n
    else:
        grad = -power * vpos ** (power - 1) * y_sign / n
    return LossEval(float(value), grad)


def log_loss(power: int, y: np.ndarray, o: np.ndarray, sigma: str = "softmax",
             negate_squared: bool = False) -> LossEval:
    """Cross entropy (power 1) and its squared variant (power 2).

    power 1: -sum_j y_j log p_j.  With softmax this has the closed-form
    gradient p - y; with sigmoid, -y (1 - p).

    power 2: sum_j (y_j log p_j)^2, which is nonnegative and minimised as
    p_true -> 1.  Writing the leading sign as minus instead would reward
    driving log p -> -inf through the square, so the negated form is
    unbounded below; it is exposed behind ``negate_squared`` for
    side-by-side comparison only.
    """
    y, o = _check_pair(y, o)
    n = y.shape[0]
    p = _apply_sigma(o, sigma)
    pc = clamp_probs(p)
    logp = np.log(pc)
    if power == 1:
        value = np.mean(-np.sum(y * logp, axis=1))
        if sigma == "softmax":
            grad = (p - y) / n
        else:
            grad = -y * (1.0 - p) / n
        return LossEval(float(value), grad)
    if power != 2:
        raise ValueError(f"power must be 1 or 2, got {power}")
    term = y * logp
    value = np.mean(np.sum(term * term, axis=1))
    g_p = 2.0 * y * y * logp / pc
    grad = _chain(g_p, p, sigma) / n
    if negate_squared:
        return LossEval(-float(value), -grad)
    return LossEval(float(value), grad)


def tanimoto_loss(y: np.ndarray, o: np.ndarray, sigma: str = "softmax") -> LossEval:
    """Negated Tanimoto (extended Jaccard) similarity of p and y.

    v = -a / (b + c - a) with a = <p, y>, b = ||p||^2, c = ||y||^2; for a
    distribution p and one-hot y the value lies in [-1, 0] with minimum -1
    exactly at p = y.  Quotient rule:
    dv/dp_j = -(y_j D - a (2 p_j - y_j)) / D^2,  D = b + c - a.
    """
    y, o = _check_pair(y, o)
    n = y.shape[0]
    p = _apply_sigma(o, sigma)
    a = np.sum(p * y, axis=1, keepdims=True)
    b = np.sum(p * p, axis=1, keepdims=True)
    c = np.sum(y * y, axis=1, keepdims=True)
    den = b + c - a
    value = np.mean(-a / den)
    g_p = -(y * den - a * (2.0 * p - y)) / (den * den)
    return LossEval(float(value), _chain(g_p, p, sigma) / n)


def cauchy_schwarz_loss(y: np.ndarray, o: np.ndarray, sigma: str = "softmax") -> LossEval:
    """Cauchy-Schwarz divergence -log(<p, y> / (||p|| ||y||)).

    Nonnegative, zero iff p is proportional to y.  With a = <p, y>,
    b = ||p||^2:  dv/dp_j = -y_j / a + p_j / b.
    """
    y, o = _check_pair(y, o)
    n = y.shape[0]
    p = _apply_sigma(o, sigma)
    pc = clamp_probs(p)
    a = np.sum(pc * y, axis=1, keepdims=True)
    b = np.sum(p * p, axis=1, keepdims=True)
    c = np.sum(y * y, axis=1, keepdims=True)
    value = np.mean(-np.log(a / (np.sqrt(b) * np.sqrt(c))))
    g_p = -y / a + p / b
    return LossEval(float(value), _chain(g_p, p, sigma) / n)


def evaluate(loss_id: LossId | str, y: np.ndarray, o: np.ndarray, *,
             sigma: str | None = None,
             hinge_margin: float = DEFAULT_HINGE_MARGIN,
             negate_squared_log: bool = False) -> LossEval:
    """Dispatch a one-hot labelled batch to the loss named by ``loss_id``.

    ``sigma`` overrides the default probability transform of
    probability-based losses; it is ignored by raw and hinge losses.
    Hinge losses receive the +-1 encoding yhat = 2y - 1 internally.
    """
    loss_id = LossId(loss_id)
    spec = LOSS_SPECS[loss_id]
    sig = sigma or spec.sigma
    if loss_id is LossId.L1:
        return lp_loss(1, y, o)
    if loss_id is LossId.L2:
        return lp_loss(2, y, o)
    if loss_id is LossId.EXPECTATION_L1:
        return expectation_loss(1, y, o, sig)
    if loss_id is LossId.EXPECTATION_L2:
        return expectation_loss(2, y, o, sig)
    if loss_id is LossId.CHEBYSHEV:
        return chebyshev_loss(y, o, sig)
    if loss_id in (LossId.HINGE, LossId.HINGE2, LossId.HINGE3):
        power = {LossId.HINGE: 1, LossId.HINGE2: 2, LossId.HINGE3: 3}[loss_id]
        y = as_dense2(y, "labels")
        return hinge_loss(power, 2.0 * y - 1.0, o, margin=hinge_margin)
    if loss_id is LossId.LOG:
        return log_loss(1, y, o, sig)
    if loss_id is LossId.LOG2:
        return log_loss(2, y, o, sig, negate_squared=negate_squared_log)
    if loss_id is LossId.TANIMOTO:
        return tanimoto_loss(y, o, sig)
    return cauchy_schwarz_loss(y, o, sig)


# ---------------------------------------------------------------------------
# Theory verifiers
# ---------------------------------------------------------------------------

def _check_prob_batch(y: np.ndarray, p: np.ndarray, tol: float = 1e-9):
    y = as_dense2(y, "labels")
    p = as_dense2(p, "probabilities")
    if y.shape != p.shape:
        raise ShapeError(f"label/probability shapes differ: {y.shape} vs {p.shape}")
    sums = np.sum(p, axis=1)
    if np.max(np.abs(sums - 1.0)) > tol:
        raise DistributionError(
            f"probability row sums off by up to {np.max(np.abs(sums - 1.0)):.3e}")
    if not np.all((np.sum(y, axis=1) == 1.0) & np.all((y == 0.0) | (y == 1.0), axis=1)):
        raise ValueError("labels must be one-hot rows")
    return y, p


def expectation_identity_residuals(y: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    """Residuals of the two expectation-loss identities on a (y, p) batch.

    order 1:  mean_i sum_j |y - p|        ==  2 - 2 mean_i <y_i, p_i>
    order 2:  mean_i sum_j (y - p)^2      ==  mean ||y||^2 - 2 mean <y, p> + mean ||p||^2
    (the first right-hand term is exactly 1 for one-hot labels)
    """
    y, p = _check_prob_batch(y, p)
    dot = float(np.mean(np.sum(y * p, axis=1)))
    l1 = float(np.mean(np.sum(np.abs(y - p), axis=1)))
    res1 = abs(l1 - (2.0 - 2.0 * dot))
    l2 = float(np.mean(np.sum((y - p) ** 2, axis=1)))
    p_norm = float(np.mean(np.sum(p * p, axis=1)))
    res2 = abs(l2 - (1.0 - 2.0 * dot + p_norm))
    return res1, res2


def verify_expectation_identity(y: np.ndarray, p: np.ndarray) -> float:
    """Max absolute residual over both expectation-loss identities."""
    return max(expectation_identity_residuals(y, p))


def verify_cs_decomposition(y: np.ndarray, p: np.ndarray) -> float:
    """Residual of the divergence split into cross entropy plus half the
    collision entropy term:

        mean -log(<p,y>/||p||)  -  mean -sum y log p  -  mean (1/2) log ||p||^2
    """
    y, p = _check_prob_batch(y, p)
    pc = clamp_probs(p)
    a = np.sum(pc * y, axis=1)
    b = np.sum(p * p, axis=1)
    d_cs = float(np.mean(-np.log(a / np.sqrt(b))))
    ll = float(np.mean(-np.sum(y * np.log(pc), axis=1)))
    ent = float(np.mean(0.5 * np.log(b)))
    return abs(d_cs - ll - ent)


def binary_sigmoid_expectation_grad(o: float) -> float:
    """d/do of the order-1 expectation loss for a single sigmoid output
    holding a positive label, i.e. d|1 - sigmoid(o)|/do = -sigmoid'(o)."""
    ev = expectation_loss(1, np.array([[1.0]]), np.array([[float(o)]]), sigma="sigmoid")
    return float(ev.grad[0, 0])


# ---------------------------------------------------------------------------
# Gradient checking against the finite-difference oracle
# ---------------------------------------------------------------------------

def sample_onehot(rng: Rng, n: int, k: int) -> np.ndarray:
    """Batch of n uniform one-hot rows over k classes."""
    labels = rng.integers(k, size=n)
    y = np.zeros((n, k))
    y[np.arange(n), labels] = 1.0
    return y

def sample_prob_batch(rng: Rng, n: int, k: int, scale: float = 2.0) -> np.ndarray:
    """Batch of n random softmax distributions over k classes."""
    return softmax(rng.normal((n, k), sd=scale))


def _sample_non_kink(loss_id: LossId, rng: Rng, k: int,
                     hinge_margin: float, gap: float = 1e-3):
    """Random (y, o) with every kink and tie condition strictly inactive."""
    y = sample_onehot(rng, 1, k)
    for _ in range(1000):
        o = rng.normal((1, k), sd=1.5)
        if loss_id is LossId.L1 and np.min(np.abs(o - y)) <= gap:
            continue
        if loss_id in (LossId.HINGE, LossId.HINGE2, LossId.HINGE3):
            if np.min(np.abs(hinge_margin - (2.0 * y - 1.0) * o)) <= gap:
                continue
        if loss_id is LossId.CHEBYSHEV:
            d = np.sort(np.abs(softmax(o) - y), axis=1)[0]
            if d[-1] - d[-2] <= gap:
                continue
        return y, o
    raise RuntimeError(f"could not sample a non-kink point for {loss_id}")


def gradient_check(loss_id: LossId | str, trials: int = 200, seed: int = 0, *,
                   k: int = 5, h: float = 1e-5, sigma: str | None = None,
                   hinge_margin: float = DEFAULT_HINGE_MARGIN) -> float:
    """Max relative error between analytic and central-difference gradients
    over ``trials`` random non-kink points."""
    loss_id = LossId(loss_id)
    rng = Rng(seed).spawn(f"gradcheck/{loss_id}")
    worst = 0.0
    for _ in range(trials):
        y, o = _sample_non_kink(loss_id, rng, k, hinge_margin)
        ev = evaluate(loss_id, y, o, sigma=sigma, hinge_margin=hinge_margin)

        def f(flat_o, y=y):
            return evaluate(loss_id, y, flat_o.reshape(1, -1), sigma=sigma,
                            hinge_margin=hinge_margin).value

        fd = finite_diff_grad(f, o.reshape(-1), h=h)
        worst = max(worst, rel_err(ev.grad.reshape(-1), fd))
    return worst
