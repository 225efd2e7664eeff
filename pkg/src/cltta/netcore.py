"""Dense classifier with batch norm, manual backprop, and Adam.

Layout for ``dims = [d, h1, ..., hk, C]``::

    fc0 -> bn0 -> relu -> fc1 -> bn1 -> relu -> ... -> fc{k}

Parameters are addressed by name (``fc0.weight``, ``bn0.gamma`` ...) and
tagged with one of the groups ``bn``, ``feature`` or ``classifier``.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .numerics import seeded_rng, softmax
from . import risk

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-5
BN_MOMENTUM = 0.1

GROUPS = ("bn", "feature", "classifier")
SELECTORS = ("bn", "feature", "classifier", "all")
# "feature" follows the usual finetuning meaning: everything except the
# final classifier layer, batch-norm affine parameters included.
_SELECTED_TAGS = {
    "bn": {"bn"},
    "feature": {"bn", "feature"},
    "classifier": {"classifier"},
    "all": set(GROUPS),
}

TRAIN_STATS = "train-stats"
RUNNING_STATS = "running-stats"


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM


@dataclass
class MlpModel:
    dims: list
    weights: list
    biases: list
    norms: list
    seed: int = 0

    @property
    def n_classes(self) -> int:
        return self.dims[-1]

    @property
    def n_features(self) -> int:
        return self.dims[0]

    def params(self) -> Dict[str, np.ndarray]:
        """Trainable arrays by name (live references, not copies)."""
        out = {}
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"fc{k}.weight"] = w
            out[f"fc{k}.bias"] = b
            if k < last:
                out[f"bn{k}.gamma"] = self.norms[k].gamma
                out[f"bn{k}.beta"] = self.norms[k].beta
        return out

    def group_of(self, name: str) -> str:
        if name.startswith("bn"):
            return "bn"
        if name.startswith(f"fc{len(self.weights) - 1}."):
            return "classifier"
        return "feature"

    def param_count(self, group: str = "all") -> int:
        tags = _SELECTED_TAGS[group]
        return sum(p.size for n, p in self.params().items() if self.group_of(n) in tags)

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Every array that defines the model, running statistics included."""
        out = dict(self.params())
        for k, bn in enumerate(self.norms):
            out[f"bn{k}.running_mean"] = bn.running_mean
            out[f"bn{k}.running_var"] = bn.running_var
        return out


def check_selector(group: str) -> str:
    if group not in _SELECTED_TAGS:
        raise ValueError(f"unknown parameter group {group!r}; expected one of {SELECTORS}")
    return group


def mlp_new(dims, seed: int) -> MlpModel:
    """Glorot-uniform weights, zero biases, identity batch norm."""
    dims = [int(w) for w in dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output widths, got {dims}")
    if any(w <= 0 for w in dims):
        raise ValueError(f"all widths must be positive, got {dims}")
    rng = seeded_rng(seed)
    weights, biases, norms = [], [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    for width in dims[1:-1]:
        norms.append(BatchNorm(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width)))
    return MlpModel(dims, weights, biases, norms, seed=int(seed))


@dataclass
class _Cache:
    model_id: int
    dims: tuple
    mode: str
    n: int
    inputs: list = field(default_factory=list)    # input to each fc layer
    xhat: list = field(default_factory=list)      # normalized pre-activation
    inv_std: list = field(default_factory=list)
    var_active: list = field(default_factory=list)  # False where the floor was hit
    relu_mask: list = field(default_factory=list)


def forward(model: MlpModel, batch: np.ndarray, mode: str = RUNNING_STATS):
    """Return ``(logits, cache)``.

    In train-stats mode batch norm uses the batch mean and (biased) variance,
    floored at ``VAR_FLOOR``, and moves the running statistics by EMA.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"batch shape {x.shape} does not match input width {model.n_features}")
    if mode not in (TRAIN_STATS, RUNNING_STATS):
        raise ValueError(f"unknown forward mode {mode!r}")
    n = x.shape[0]
    if mode == TRAIN_STATS and n < 2:
        raise ValueError("train-stats forward needs at least 2 samples for batch variance")

    cache = _Cache(id(model), tuple(model.dims), mode, n)
    h = x
    last = len(model.weights) - 1
    for k in range(len(model.weights)):
        cache.inputs.append(h)
        z = h @ model.weights[k] + model.biases[k]
        if k == last:
            return z, cache
        bn = model.norms[k]
        if mode == TRAIN_STATS:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            active = var > VAR_FLOOR
            var_used = np.where(active, var, VAR_FLOOR)
            m = bn.momentum
            bn.running_mean = (1 - m) * bn.running_mean + m * mu
            bn.running_var = (1 - m) * bn.running_var + m * var_used * (n / (n - 1))
        else:
            mu = bn.running_mean
            var_used = np.maximum(bn.running_var, VAR_FLOOR)
            active = np.zeros_like(var_used, dtype=bool)
        inv_std = 1.0 / np.sqrt(var_used)
        xhat = (z - mu) * inv_std
        y = bn.gamma * xhat + bn.beta
        mask = y > 0
        cache.xhat.append(xhat)
        cache.inv_std.append(inv_std)
        cache.var_active.append(active)
        cache.relu_mask.append(mask)
        h = y * mask
    raise AssertionError("unreachable")


def backward(model: MlpModel, cache: _Cache, grad_logits: np.ndarray, group: str = "all"):
    """Gradients of the parameters in ``group``; other parameters are omitted."""
    tags = _SELECTED_TAGS[check_selector(group)]
    g = np.asarray(grad_logits, dtype=np.float64)
    if cache.model_id != id(model) or cache.dims != tuple(model.dims):
        raise ValueError("cache was produced by a different model")
    if g.shape != (cache.n, model.n_classes):
        raise ValueError(f"grad_logits shape {g.shape} does not match cache ({cache.n}, {model.n_classes})")

    grads = {}
    last = len(model.weights) - 1
    for k in range(last, -1, -1):
        if k < last:
            bn = model.norms[k]
            dy = g * cache.relu_mask[k]
            xhat = cache.xhat[k]
            grads[f"bn{k}.gamma"] = (dy * xhat).sum(axis=0)
            grads[f"bn{k}.beta"] = dy.sum(axis=0)
            dxhat = dy * bn.gamma
            if cache.mode == TRAIN_STATS:
                proj = (dxhat * xhat).mean(axis=0) * cache.var_active[k]
                g = cache.inv_std[k] * (dxhat - dxhat.mean(axis=0) - xhat * proj)
            else:
                g = dxhat * cache.inv_std[k]
        grads[f"fc{k}.weight"] = cache.inputs[k].T @ g
        grads[f"fc{k}.bias"] = g.sum(axis=0)
        if k > 0:
            g = g @ model.weights[k].T
    return {n: v for n, v in grads.items() if model.group_of(n) in tags}


class Adam:
    """Adam with bias correction; moments are created lazily per parameter."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update ``params`` in place for every name present in ``grads``."""
        for name, g in grads.items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(model, x, RUNNING_STATS)
    return softmax(logits)


def accuracy(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_proba(model, x).argmax(axis=1) == y))


@dataclass
class TrainResult:
    model: MlpModel
    train_accuracy: float
    test_accuracy: Optional[float] = None


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    return y.astype(np.int64)


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= 2:
            yield idx


def _fit(model, x, epochs, lr, batch_size, seed, loss_fn):
    model = model.copy()
    if epochs <= 0:
        return model
    opt = Adam(lr)
    params = model.params()
    rng = seeded_rng(seed, 1)
    for _ in range(epochs):
        for idx in _minibatches(x.shape[0], batch_size, rng):
            logits, cache = forward(model, x[idx], TRAIN_STATS)
            res = loss_fn(softmax(logits), idx)
            opt.step(params, backward(model, cache, res.grad_logits, "all"))
    return model


def train_source(model: MlpModel, dataset, epochs: int = 30, lr: float = 1e-2, batch_size: int = 64,
                 seed: int = 0, test=None) -> TrainResult:
    """Supervised cross-entropy training on shuffled mini-batches.

    The input model is left untouched; a trained copy is returned.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    y = _check_labels(dataset.labels, model.n_classes)
    if x.shape[0] == 0:
        raise ValueError("empty training set")

    def loss_fn(probs, idx):
        return risk.cross_entropy(probs, y[idx])

    trained = _fit(model, x, epochs, lr, batch_size, seed, loss_fn)
    test_acc = accuracy(trained, test.features, test.labels) if test is not None else None
    return TrainResult(trained, accuracy(trained, x, y), test_acc)


def draw_known_negatives(labels: np.ndarray, n_classes: int, n_negatives: int, seed: int) -> np.ndarray:
    """Fixed ``N x C`` flag matrix: ``n_negatives`` random wrong classes per sample."""
    if not 1 <= n_negatives <= n_classes - 1:
        raise ValueError(f"n_negatives must lie in [1, {n_classes - 1}], got {n_negatives}")
    y = _check_labels(labels, n_classes)
    rng = seeded_rng(seed, 2)
    # rank every class by a random key, pushing the true class to the end
    keys = rng.random((y.size, n_classes))
    keys[np.arange(y.size), y] = np.inf
    chosen = np.argsort(keys, axis=1, kind="stable")[:, :n_negatives]
    flags = np.zeros((y.size, n_classes))
    np.put_along_axis(flags, chosen, 1.0, axis=1)
    return flags


def train_with_known_cl(model: MlpModel, dataset, n_negatives: int, epochs: int = 30, lr: float = 1e-2,
                        seed: int = 0, batch_size: int = 64, test=None) -> TrainResult:
    """Train only from fixed complementary labels using the BCL objective."""
    x = np.asarray(dataset.features, dtype=np.float64)
    flags = draw_known_negatives(dataset.labels, model.n_classes, n_negatives, seed)

    def loss_fn(probs, idx):
        return risk.bcl_loss_flags(probs, flags[idx])

    trained = _fit(model, x, epochs, lr, batch_size, seed, loss_fn)
    test_acc = accuracy(trained, test.features, test.labels) if test is not None else None
    return TrainResult(trained, accuracy(trained, x, dataset.labels), test_acc)
