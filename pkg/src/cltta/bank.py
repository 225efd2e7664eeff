"""Memory bank of recent predictions and the thresholding policies built on it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import column_percentiles

DEFAULT_CAPACITY = 200
DEFAULT_PERCENTILE = 75.0
_BELOW_ONE = np.nextafter(1.0, 0.0)


class MemoryBank:
    """FIFO store of prediction rows, oldest first, capped at ``capacity`` rows."""

    def __init__(self, n_classes: int, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.n_classes = n_classes
        self.capacity = capacity
        self.rows = np.empty((0, n_classes))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def push(self, probs: np.ndarray) -> "MemoryBank":
        """Append a batch in order, then drop the oldest rows beyond capacity."""
        p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        if p.size == 0:
            return self
        if p.shape[1] != self.n_classes:
            raise ValueError(f"expected {self.n_classes} columns, got {p.shape[1]}")
        merged = np.concatenate([self.rows, p], axis=0)
        self.rows = merged[-self.capacity:].copy()
        return self

    def thresholds(self, t: float = DEFAULT_PERCENTILE) -> np.ndarray:
        """Per-category percentile of the stored rows."""
        if len(self) == 0:
            raise ValueError("thresholds of an empty memory bank")
        return column_percentiles(self.rows, t)

    def clear(self) -> None:
        self.rows = np.empty((0, self.n_classes))


def push_batch(bank: MemoryBank, probs: np.ndarray) -> MemoryBank:
    return bank.push(probs)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Either ``dynamic`` (percentile ``t`` over a bank of ``capacity`` rows) or ``fixed``."""

    kind: str = "dynamic"
    t: float = DEFAULT_PERCENTILE
    capacity: int = DEFAULT_CAPACITY
    theta0: Optional[float] = None

    def __post_init__(self):
        if self.kind == "dynamic":
            if not 0.0 <= self.t <= 100.0:
                raise ValueError(f"percentile must lie in [0, 100], got {self.t}")
            if self.capacity < 1:
                raise ValueError(f"capacity must be positive, got {self.capacity}")
        elif self.kind == "fixed":
            if self.theta0 is None or not 0.0 <= self.theta0 < 1.0:
                raise ValueError(f"fixed policy needs theta0 in [0, 1), got {self.theta0}")
        else:
            raise ValueError(f"unknown threshold policy {self.kind!r}")

    @classmethod
    def dynamic(cls, t: float = DEFAULT_PERCENTILE, capacity: int = DEFAULT_CAPACITY) -> "ThresholdPolicy":
        return cls("dynamic", t=t, capacity=capacity)

    @classmethod
    def fixed(cls, theta0: float) -> "ThresholdPolicy":
        return cls("fixed", theta0=theta0)


def default_fixed_threshold(n_classes: int) -> float:
    """0.05 for 10-way problems, 0.005 for 100-way; scaled as ``0.5 / C`` in between."""
    return 0.5 / n_classes


def policy_thresholds(policy: ThresholdPolicy, bank: MemoryBank, current_batch: np.ndarray) -> np.ndarray:
    """Thresholds for the incoming batch.

    A dynamic policy reads only past predictions from ``bank``; on a cold
    start (empty bank) the current batch stands in for the history.
    """
    n_classes = bank.n_classes
    if policy.kind == "fixed":
        return np.full(n_classes, policy.theta0)
    if len(bank) > 0:
        theta = bank.thresholds(policy.t)
    else:
        batch = np.atleast_2d(np.asarray(current_batch, dtype=np.float64))
        if batch.size == 0:
            raise ValueError("dynamic thresholds need a non-empty bank or batch")
        theta = MemoryBank(n_classes, policy.capacity).push(batch).thresholds(policy.t)
    # saturated softmax rows can put a percentile at exactly 1.0
    return np.minimum(theta, _BELOW_ONE)
