"""Seeded Gaussian-cluster datasets and label-preserving feature corruptions.

Corruption kinds and their severity scalings (``s`` in 1..5)::

    gauss_noise    x + N(0, (NOISE_SCALE * s * sd_j)^2) per coordinate j
    mean_shift     x + SHIFT_SCALE * s * u           (u: random unit vector)
    feature_scale  x * exp(SCALE_SCALE * s * a)      (a_j ~ U[-1, 1])
    rotation_mix   x @ expm(ROTATION_SCALE * s * A)  (A: random skew-symmetric, unit spectral norm)
    mask_dropout   zero round(MASK_SCALE * s * d) random coordinates of each sample

The random direction / rotation / factors depend on the seed and kind only,
so raising the severity scales one fixed perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .numerics import seeded_rng

KINDS = ("gauss_noise", "mean_shift", "feature_scale", "rotation_mix", "mask_dropout")
_KIND_ID = {"none": 0, **{k: i + 1 for i, k in enumerate(KINDS)}}

NOISE_SCALE = 0.1
SHIFT_SCALE = 0.3
SCALE_SCALE = 0.3
ROTATION_SCALE = 0.15
MASK_SCALE = 0.1

DEFAULT_SEVERITIES = (3, 5)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = "source"
    seed: int = 0
    severity: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(f"features {self.features.shape} and labels {self.labels.shape} disagree")
        if self.labels.size == 0:
            raise ValueError("empty dataset")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite features")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class Corruption:
    kind: str
    severity: int = 5

    def __post_init__(self):
        if self.kind == "none":
            if self.severity != 0:
                raise ValueError("the identity corruption 'none' takes severity 0")
        elif self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}; expected one of {KINDS}")
        elif not 1 <= self.severity <= 5:
            raise ValueError(f"severity must lie in 1..5, got {self.severity}")

    @property
    def name(self) -> str:
        return f"{self.kind}-{self.severity}"

    @classmethod
    def parse(cls, text: str) -> "Corruption":
        """Inverse of :attr:`name`; ``"none"`` alone is accepted too."""
        if text == "none":
            return cls("none", 0)
        kind, _, sev = text.rpartition("-")
        if not kind:
            raise ValueError(f"corruption must look like 'kind-severity', got {text!r}")
        return cls(kind, int(sev))


IDENTITY = Corruption("none", 0)


def make_source(n_classes: int = 10, dim: int = 20, n_per_class: int = 500, spread: float = 0.35,
                seed: int = 0):
    """Gaussian clusters around random unit-norm means; returns ``(train, test)``."""
    if n_classes < 2 or dim < 2 or n_per_class < 1:
        raise ValueError(f"invalid sizes C={n_classes}, d={dim}, n_per_class={n_per_class}")
    if spread < 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    rng = seeded_rng(seed)
    means = rng.normal(size=(n_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    def draw(tag: str):
        y = np.repeat(np.arange(n_classes), n_per_class)
        x = means[y] + spread * rng.normal(size=(y.size, dim))
        order = rng.permutation(y.size)
        return Dataset(x[order], y[order], n_classes, name=tag, seed=seed)

    train = draw("source-train")
    test = draw("source-test")
    return train, test


def _skew(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim))
    a = g - g.T
    return a / np.linalg.norm(a, 2)


def corrupt(data: Dataset, c: Corruption, seed: int) -> Dataset:
    """Apply corruption ``c``; labels and sample count are untouched."""
    x = data.features
    if c.kind == "none":
        return replace(data, features=x.copy(), name=c.name, severity=0)
    s = c.severity
    rng = seeded_rng(seed, _KIND_ID[c.kind])
    n, d = x.shape
    if c.kind == "gauss_noise":
        sd = x.std(axis=0)
        out = x + rng.normal(size=(n, d)) * (NOISE_SCALE * s * sd)
    elif c.kind == "mean_shift":
        u = rng.normal(size=d)
        out = x + SHIFT_SCALE * s * u / np.linalg.norm(u)
    elif c.kind == "feature_scale":
        out = x * np.exp(SCALE_SCALE * s * rng.uniform(-1.0, 1.0, size=d))
    elif c.kind == "rotation_mix":
        out = x @ expm(ROTATION_SCALE * s * _skew(rng, d))
    else:
        k = int(round(MASK_SCALE * s * d))
        dropped = np.argsort(rng.random((n, d)), axis=1)[:, :k]
        out = x.copy()
        np.put_along_axis(out, dropped, 0.0, axis=1)
    return replace(data, features=out, name=c.name, severity=s)


def default_suite() -> list:
    """Every kind at severity 3, then every kind at severity 5 (10 items)."""
    return [Corruption(k, s) for s in DEFAULT_SEVERITIES for k in KINDS]


def shuffled_suite(seed: int) -> list:
    suite = default_suite()
    return [suite[i] for i in seeded_rng(seed, 7).permutation(len(suite))]


def make_stream(test: Dataset, c: Corruption, n_batches: int, batch_size: int, seed: int) -> Dataset:
    """Corrupted test stream of ``n_batches * batch_size`` samples.

    Depends only on ``(test, c, seed)``, never on where ``c`` sits in a scenario.
    """
    total = n_batches * batch_size
    rng = seeded_rng(seed, 100, _KIND_ID[c.kind], c.severity)
    idx = rng.permutation(len(test))
    if total > idx.size:
        idx = np.concatenate([idx, rng.integers(0, len(test), size=total - idx.size)])
    return corrupt(test.subset(idx[:total]), c, seed)


def save_dataset(path, data: Dataset) -> None:
    """Columnar text: a ``C=.. d=.. N=.. seed=..`` header, then ``label f1 .. fd`` per line."""
    lines = [f"C={data.n_classes} d={data.dim} N={len(data)} seed={data.seed} "
             f"name={data.name} severity={data.severity}"]
    for y, row in zip(data.labels, data.features):
        lines.append(" ".join([str(int(y))] + ["%.17g" % v for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = dict(tok.split("=", 1) for tok in text[0].split())
        n_classes, dim, n = int(header["C"]), int(header["d"]), int(header["N"])
        seed = int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header {text[0]!r}") from exc
    body = [ln.split() for ln in text[1:] if ln.strip()]
    if len(body) != n or any(len(r) != dim + 1 for r in body):
        raise ValueError(f"{path}: expected {n} rows of {dim + 1} fields")
    labels = np.array([int(r[0]) for r in body])
    features = np.array([[float(v) for v in r[1:]] for r in body]).reshape(n, dim)
    return Dataset(features, labels, n_classes, name=header.get("name", "source"), seed=seed,
                   severity=int(header.get("severity", 0)))
