"""Pseudo labels, hard/soft complementary labels, and their accuracy."""

from __future__ import annotations

import numpy as np


def _as_theta(theta, n_classes: int) -> np.ndarray:
    th = np.broadcast_to(np.asarray(theta, dtype=np.float64), (n_classes,))
    if np.any(th < 0) or np.any(th >= 1):
        raise ValueError(f"thresholds must lie in [0, 1), got {th}")
    return th


def pseudo_label(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest index."""
    return np.argmax(np.atleast_2d(probs), axis=1)


def hard_complementary(probs: np.ndarray, theta) -> np.ndarray:
    """Binary flags: category ``c`` is negative for a row iff ``p_c < theta_c``."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    th = _as_theta(theta, p.shape[1])
    return (p < th).astype(np.float64)


def soft_complementary(probs: np.ndarray, theta) -> np.ndarray:
    """Confidence-weighted negatives ``[theta_j - p_ij]_+ / theta_j``.

    Categories with ``theta_j == 0`` are exempt and get weight 0.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    th = _as_theta(theta, p.shape[1])
    active = th > 0
    safe = np.where(active, th, 1.0)
    return np.where(active, np.maximum(th - p, 0.0) / safe, 0.0)


def cl_correctness(flags: np.ndarray, truth) -> float:
    """Fraction of rows whose true class is not flagged (empty sets count as correct)."""
    f = np.atleast_2d(flags)
    y = np.asarray(truth, dtype=np.int64)
    if y.shape[0] != f.shape[0]:
        raise ValueError(f"{f.shape[0]} flag rows vs {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= f.shape[1]):
        raise ValueError(f"truth index out of range [0, {f.shape[1]})")
    return float(np.mean(f[np.arange(y.size), y] == 0))


def pl_accuracy(pseudo, truth) -> float:
    a = np.asarray(pseudo)
    b = np.asarray(truth)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a == b))


def cl_bound(theta_max: float, n_classes: int) -> float:
    """Lower bound ``(1 - theta_max)^(C-1)`` on complementary-label correctness."""
    if not 0.0 <= theta_max < 1.0:
        raise ValueError(f"theta_max must lie in [0, 1), got {theta_max}")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    return (1.0 - theta_max) ** (n_classes - 1)


def threshold_crossover(f_max: float, n_classes: int) -> float:
    """Largest threshold below which the CL bound beats pseudo-label accuracy ``f_max``."""
    if not 0.0 < f_max < 1.0:
        raise ValueError(f"f_max must lie in (0, 1), got {f_max}")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    return 1.0 - f_max ** (1.0 / (n_classes - 1))
