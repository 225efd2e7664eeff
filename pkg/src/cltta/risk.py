"""Losses over prediction matrices, each with gradients w.r.t. probs and logits.

All logarithms are natural and clamped at ``LOG_EPS``; where a probability
sits below the clamp its log is constant, so its gradient is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labeling import hard_complementary, pseudo_label
from .numerics import LOG_EPS, clamped_log

SINGULAR_TOL = 1e-9


@dataclass
class LossResult:
    value: float
    grad_probs: np.ndarray
    grad_logits: np.ndarray


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. softmax outputs back to the logits."""
    inner = (grad_probs * probs).sum(axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def _result(value: float, probs: np.ndarray, grad_probs: np.ndarray) -> LossResult:
    return LossResult(float(value), grad_probs, softmax_backward(probs, grad_probs))


def _dlog(p: np.ndarray) -> np.ndarray:
    return np.where(p > LOG_EPS, 1.0 / np.maximum(p, LOG_EPS), 0.0)


def _theta(theta, n_classes: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(theta, dtype=np.float64), (n_classes,)).copy()


def bcl_loss_flags(probs: np.ndarray, flags: np.ndarray) -> LossResult:
    """Basic complementary loss ``-(1/NC) sum flag * q log q`` with ``q = 1 - p``."""
    f = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n, c = f.shape
    q = 1.0 - f
    log_q = clamped_log(q)
    value = -(flags * q * log_q).sum() / (n * c)
    # d/dp of -q log q is (log q + 1) while q is above the clamp, log eps below it
    dq = np.where(q > LOG_EPS, log_q + 1.0, log_q)
    return _result(value, f, flags * dq / (n * c))


def bcl_loss(probs: np.ndarray, theta) -> LossResult:
    """BCL with categories flagged by ``p_c < theta_c``."""
    return bcl_loss_flags(probs, hard_complementary(probs, theta))


def complementary_transform(ordinary: np.ndarray, theta) -> np.ndarray:
    """Unclipped affine map from ordinary labels to complementary labels.

    Row-wise ``(theta_c * sum(p) - p_c) / theta_c``; for row-stochastic input
    this is ``(theta_c - p_c) / theta_c``.
    """
    p = np.atleast_2d(np.asarray(ordinary, dtype=np.float64))
    th = _theta(theta, p.shape[1])
    if np.any(th <= 0):
        raise ValueError("complementary transform needs every theta_c > 0")
    return (th * p.sum(axis=1, keepdims=True) - p) / th


def inverse_transform(signed: np.ndarray, theta) -> np.ndarray:
    """Invert :func:`complementary_transform` in closed form.

    ``(I - theta e^T)`` is a rank-one update of the identity, so its inverse is
    ``I + theta e^T / (1 - sum(theta))``; no linear solve is needed.
    """
    eta = np.atleast_2d(np.asarray(signed, dtype=np.float64))
    th = _theta(theta, eta.shape[1])
    if np.any(th <= 0):
        raise ValueError("inverse transform needs every theta_c > 0")
    denom = 1.0 - th.sum()
    if abs(denom) < SINGULAR_TOL:
        raise ValueError(f"singular transform: sum(theta) = {th.sum():.12g} is 1")
    u = th * eta
    return -(u + th * (u.sum(axis=1, keepdims=True) / denom))


def ecl_risk(weights: np.ndarray, probs_test: np.ndarray, theta) -> LossResult:
    """Enhanced complementary risk.

    Per row, ``sum_c w_c th_c log f_c + (sum_c th_c w_c) / (1 - sum th) *
    sum_j th_j log f_j``, averaged over rows. With the unclipped transform of
    an ordinary label as ``weights`` this equals :func:`ordinary_risk` exactly.
    Weights are treated as constants when differentiating.
    """
    f = np.atleast_2d(np.asarray(probs_test, dtype=np.float64))
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if w.shape != f.shape:
        raise ValueError(f"weights shape {w.shape} != probs shape {f.shape}")
    n, c = f.shape
    th = _theta(theta, c)
    s = th.sum()
    if s >= 1.0:
        raise ValueError(f"ECL needs sum(theta) < 1, got {s:.6g}")
    log_f = clamped_log(f)
    k = (w * th).sum(axis=1, keepdims=True) / (1.0 - s)
    coef = w * th + k * th
    value = (coef * log_f).sum() / n
    return _result(value, f, coef * _dlog(f) / n)


def ordinary_risk(labels: np.ndarray, probs: np.ndarray) -> float:
    """Mean of ``sum_y label_y * (-log p_y)``; labels may be signed."""
    lab = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    f = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if lab.shape != f.shape:
        raise ValueError(f"labels shape {lab.shape} != probs shape {f.shape}")
    return float(-(lab * clamped_log(f)).sum() / f.shape[0])


def cross_entropy(probs: np.ndarray, labels) -> LossResult:
    """Mean negative log-likelihood of integer ``labels``."""
    f = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n = f.shape[0]
    rows = np.arange(n)
    picked = f[rows, labels]
    grad = np.zeros_like(f)
    grad[rows, labels] = -_dlog(picked) / n
    return _result(-clamped_log(picked).sum() / n, f, grad)


def npl_loss(probs: np.ndarray) -> LossResult:
    """Self-training cross-entropy against each row's own argmax (held constant)."""
    return cross_entropy(probs, pseudo_label(probs))


def entropy_loss(probs: np.ndarray) -> LossResult:
    """Mean Shannon entropy of the rows."""
    f = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n = f.shape[0]
    log_f = clamped_log(f)
    value = -(f * log_f).sum() / n
    grad = -(log_f + (f > LOG_EPS)) / n
    return _result(value, f, grad)
