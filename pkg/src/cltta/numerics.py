"""Shared numeric primitives: softmax, clamped log, percentile, seeded RNG."""

from __future__ import annotations

import math

import numpy as np

LOG_EPS = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of an ``N x C`` (or length-``C``) array.

    Uses max-subtraction, so entries up to about ``1e4`` in magnitude do not
    overflow.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        bad = np.argwhere(~np.isfinite(z))[0].tolist()
        raise ValueError(f"softmax: non-finite logit at index {bad}")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def clamped_log(p, eps: float = LOG_EPS):
    """Natural log of ``max(p, eps)``; works on scalars and arrays."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if np.ndim(p) == 0:
        return math.log(max(float(p), eps))
    return np.log(np.maximum(p, eps))


def percentile(values, t: float) -> float:
    """Inclusive linear-interpolation percentile.

    Sort ascending, take rank ``r = t/100 * (n-1)`` and interpolate between
    the elements at ``floor(r)`` and ``ceil(r)``.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty sequence")
    return float(_interp_sorted(v, t))


def column_percentiles(matrix: np.ndarray, t: float) -> np.ndarray:
    """Percentile of every column of ``matrix``, same rule as :func:`percentile`."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError(f"need a non-empty 2-D matrix, got shape {m.shape}")
    return _interp_sorted(np.sort(m, axis=0), t)


def _interp_sorted(v: np.ndarray, t: float):
    if not 0.0 <= t <= 100.0:
        raise ValueError(f"percentile t must lie in [0, 100], got {t}")
    n = v.shape[0]
    r = (t / 100.0) * (n - 1)
    lo = math.floor(r)
    hi = math.ceil(r)
    frac = r - lo
    return v[lo] + (v[hi] - v[lo]) * frac


def seeded_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator backed by Philox-4x64 (counter-based).

    Extra integers in ``stream`` select an independent sub-stream, so e.g.
    ``seeded_rng(seed, 3, 5)`` never overlaps ``seeded_rng(seed)``.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))
