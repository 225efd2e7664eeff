"""Streaming test-time adaptation engine and the OAAT / continual protocols.

Per batch: predict (pre-update, this is what gets scored), pick thresholds,
build labels, take one optimizer step on the selected parameter group, then
refresh the memory bank with the predictions used for labeling.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import netcore as nc
from . import risk
from .bank import MemoryBank, ThresholdPolicy, policy_thresholds
from .labeling import hard_complementary, pseudo_label, soft_complementary
from .numerics import softmax
from .scenarios import Corruption, Dataset, make_stream

logger = logging.getLogger(__name__)

LOSS_KINDS = ("BCL", "ECL", "NPL", "ENTROPY", "NONE", "SOURCE")
PROTOCOLS = ("OAAT", "continual")
WEIGHT_SOURCES = ("current", "frozen")

DEFAULT_LR = 1e-2
DEFAULT_BATCH_SIZE = 64
DEFAULT_N_BATCHES = 50


@dataclass(frozen=True)
class AdaptationConfig:
    loss_kind: str = "ECL"
    threshold_policy: ThresholdPolicy = field(default_factory=ThresholdPolicy.dynamic)
    weight_source: str = "current"
    param_group: str = "bn"
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH_SIZE
    protocol: str = "OAAT"
    seed: int = 0
    n_batches: int = DEFAULT_N_BATCHES
    config_id: str = ""

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}; expected one of {LOSS_KINDS}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.weight_source not in WEIGHT_SOURCES:
            raise ValueError(f"unknown weight source {self.weight_source!r}")
        nc.check_selector(self.param_group)
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch-norm statistics)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.n_batches < 1:
            raise ValueError("n_batches must be positive")

    @property
    def name(self) -> str:
        if self.config_id:
            return self.config_id
        pol = self.threshold_policy
        tag = "dynamic" if pol.kind == "dynamic" else "fixed"
        return f"{self.loss_kind}-{tag}-{self.protocol}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["threshold_policy"] = asdict(self.threshold_policy)
        return d


@dataclass
class BatchOutcome:
    predictions: np.ndarray
    accuracy: float
    theta: np.ndarray
    loss: Optional[float]
    updated: bool


class Engine:
    """Mutable adaptation state: model, optimizer, memory bank."""

    def __init__(self, config: AdaptationConfig, model: nc.MlpModel):
        self.config = config
        self.source = model
        self.skipped = 0
        self.reset()

    def reset(self) -> None:
        """Back to the pretrained model with a fresh optimizer and empty bank."""
        self.model = self.source.copy()
        self.params = self.model.params()
        self.optimizer = nc.Adam(self.config.lr)
        self.bank = MemoryBank(self.model.n_classes, self.config.threshold_policy.capacity)

    def adapt_batch(self, x: np.ndarray, y: Optional[np.ndarray] = None) -> BatchOutcome:
        """Predict on ``x``, then adapt on it. ``y`` is used only for scoring."""
        cfg = self.config
        if x.shape[0] < 2:
            raise ValueError("adaptation batches need at least 2 samples")
        kind = cfg.loss_kind
        mode = nc.RUNNING_STATS if kind == "SOURCE" else nc.TRAIN_STATS
        logits, cache = nc.forward(self.model, x, mode)
        probs = softmax(logits)
        preds = pseudo_label(probs)
        acc = float(np.mean(preds == y)) if y is not None else float("nan")
        theta = policy_thresholds(cfg.threshold_policy, self.bank, probs)

        if kind == "SOURCE":
            return BatchOutcome(preds, acc, theta, None, False)

        loss_value, updated = None, False
        if kind != "NONE":
            res = self._loss(x, probs, theta)
            if res is not None:
                grads = nc.backward(self.model, cache, res.grad_logits, cfg.param_group)
                self.optimizer.step(self.params, grads)
                loss_value, updated = res.value, True
        self.bank.push(probs)
        return BatchOutcome(preds, acc, theta, loss_value, updated)

    def _label_probs(self, x: np.ndarray, probs: np.ndarray) -> np.ndarray:
        if self.config.weight_source == "frozen":
            return nc.predict_proba(self.source, x)
        return probs

    def _loss(self, x, probs, theta) -> Optional[risk.LossResult]:
        kind = self.config.loss_kind
        if kind == "ENTROPY":
            return risk.entropy_loss(probs)
        ref = self._label_probs(x, probs)
        if kind == "NPL":
            return risk.cross_entropy(probs, pseudo_label(ref))
        if kind == "BCL":
            return risk.bcl_loss_flags(probs, hard_complementary(ref, theta))
        # ECL is undefined once the thresholds sum to one or more
        if theta.sum() >= 1.0 - risk.SINGULAR_TOL:
            self.skipped += 1
            logger.debug("ECL update skipped: sum(theta) = %.6g", theta.sum())
            return None
        return risk.ecl_risk(soft_complementary(ref, theta), probs, theta)


@dataclass
class RunReport:
    config: AdaptationConfig
    seed: int
    corruptions: List[str]
    accuracy: List[float]
    batch_accuracy: List[List[float]]
    thresholds: List[np.ndarray]
    skipped_updates: int = 0
    final_model: Optional[nc.MlpModel] = None

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy))

    def mean_threshold(self, i: int) -> float:
        return float(np.mean(self.thresholds[i]))


def _as_corruptions(scenario) -> List[Corruption]:
    return [c if isinstance(c, Corruption) else Corruption.parse(c) for c in scenario]


def run_scenario(config: AdaptationConfig, model: nc.MlpModel, scenario: Sequence, test: Dataset) -> RunReport:
    """Stream every corruption of ``scenario`` through an engine.

    OAAT resets model, optimizer and bank before each corruption; continual
    carries everything across. Streams depend on ``(test, corruption, seed)``.
    """
    items = _as_corruptions(scenario)
    if not items:
        raise ValueError("scenario must contain at least one corruption")
    if test.dim != model.n_features or test.n_classes != model.n_classes:
        raise ValueError(f"data (d={test.dim}, C={test.n_classes}) does not match model dims {model.dims}")
    engine = Engine(config, model)
    bs = config.batch_size
    accs, traces, thetas = [], [], []
    for c in items:
        if config.protocol == "OAAT":
            engine.reset()
        stream = make_stream(test, c, config.n_batches, bs, config.seed)
        trace, th = [], []
        for b in range(config.n_batches):
            sl = slice(b * bs, (b + 1) * bs)
            out = engine.adapt_batch(stream.features[sl], stream.labels[sl])
            trace.append(out.accuracy)
            th.append(out.theta)
        traces.append(trace)
        thetas.append(np.array(th))
        accs.append(float(np.mean(trace)))
    return RunReport(config, config.seed, [c.name for c in items], accs, traces, thetas,
                     engine.skipped, engine.model)


@dataclass
class ComparisonRow:
    config_id: str
    seeds: List[int]
    means: List[float]
    reports: List[RunReport] = field(repr=False, default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.means))

    @property
    def sd(self) -> float:
        return float(np.std(self.means, ddof=1)) if len(self.means) > 1 else 0.0


ScenarioArg = Union[Sequence, Callable[[int], Sequence]]


def compare_runs(configs: Sequence[AdaptationConfig], model: nc.MlpModel, scenario: ScenarioArg,
                 test: Dataset, seeds: Sequence[int]) -> List[ComparisonRow]:
    """Run every (config, seed) pair; rows keep the order of ``configs``.

    ``scenario`` may be a callable mapping a seed to a corruption list, which
    is how shuffled-order studies are expressed.
    """
    if not configs or not seeds:
        raise ValueError("need at least one config and one seed")
    rows = []
    for cfg in configs:
        reports = []
        for seed in seeds:
            items = scenario(seed) if callable(scenario) else scenario
            reports.append(run_scenario(_with_seed(cfg, seed), model, items, test))
        rows.append(ComparisonRow(cfg.name, list(seeds), [r.mean_accuracy for r in reports], reports))
    return rows


def _with_seed(cfg: AdaptationConfig, seed: int) -> AdaptationConfig:
    return replace(cfg, seed=seed)
