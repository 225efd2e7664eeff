"""Experiment spec files (YAML) and their schema.

Unknown keys are rejected at every level so that a misspelled hyperparameter
fails loudly instead of silently falling back to a default. The top-level
``seed`` is mandatory; every other seed defaults to it.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .. import bank
from ..adapt import DEFAULT_BATCH_SIZE, DEFAULT_LR, DEFAULT_N_BATCHES, AdaptationConfig
from ..scenarios import Corruption, default_suite, shuffled_suite

SCHEMA_VERSION = 1


class SpecError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SourceSpec(_Strict):
    n_classes: int = Field(10, ge=2)
    dim: int = Field(20, ge=2)
    n_per_class: int = Field(500, ge=1)
    spread: float = Field(0.35, ge=0)


class ModelSpec(_Strict):
    hidden: List[int] = [64]


class TrainSpec(_Strict):
    epochs: int = Field(15, ge=0)
    lr: float = Field(3e-3, gt=0)
    batch_size: int = Field(64, ge=2)


class ThresholdSpec(_Strict):
    kind: Literal["dynamic", "fixed"] = "dynamic"
    percentile: float = Field(bank.DEFAULT_PERCENTILE, ge=0, le=100)
    capacity: int = Field(bank.DEFAULT_CAPACITY, ge=1)
    theta: Optional[float] = Field(None, ge=0, lt=1)


class AdaptConfigSpec(_Strict):
    id: str
    loss: Literal["BCL", "ECL", "NPL", "ENTROPY", "NONE", "SOURCE"] = "ECL"
    threshold: ThresholdSpec = ThresholdSpec()
    weight_source: Literal["current", "frozen"] = "current"
    param_group: Literal["bn", "feature", "classifier", "all"] = "bn"
    lr: float = Field(DEFAULT_LR, gt=0)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=2)
    protocol: Literal["OAAT", "continual"] = "OAAT"

    @field_validator("id")
    @classmethod
    def _plain_id(cls, v: str) -> str:
        if not v or any(ch in v for ch in ',"\n'):
            raise ValueError("config id must be non-empty and free of commas, quotes and newlines")
        return v


class AdaptSpec(_Strict):
    seeds: Optional[List[int]] = None
    n_batches: int = Field(DEFAULT_N_BATCHES, ge=1)
    configs: List[AdaptConfigSpec] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [c.id for c in self.configs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate config ids: {ids}")
        return self


class ShuffledScenario(_Strict):
    shuffled: int


class DemoSpec(_Strict):
    negatives: List[int] = [4, 6, 8]
    seeds: Optional[List[int]] = None


class ExperimentSpec(_Strict):
    schema_version: Literal[1]
    seed: int = Field(ge=0)
    source: SourceSpec = SourceSpec()
    model: ModelSpec = ModelSpec()
    train: TrainSpec = TrainSpec()
    adapt: Optional[AdaptSpec] = None
    scenario: Union[Literal["default"], List[str], ShuffledScenario] = "default"
    demo: DemoSpec = DemoSpec()
    out_dir: Optional[str] = None

    @field_validator("scenario")
    @classmethod
    def _known_corruptions(cls, v):
        if isinstance(v, list):
            if not v:
                raise ValueError("explicit scenario list is empty")
            for item in v:
                Corruption.parse(item)
        return v

    @property
    def dims(self) -> List[int]:
        return [self.source.dim, *self.model.hidden, self.source.n_classes]

    def corruptions(self, seed: Optional[int] = None) -> List[Corruption]:
        if self.scenario == "default":
            return default_suite()
        if isinstance(self.scenario, ShuffledScenario):
            return shuffled_suite(self.scenario.shuffled)
        return [Corruption.parse(s) for s in self.scenario]

    def adapt_seeds(self) -> List[int]:
        if self.adapt is None:
            raise SpecError("spec has no 'adapt' section")
        return list(self.adapt.seeds) if self.adapt.seeds else [self.seed]

    def demo_seeds(self) -> List[int]:
        return list(self.demo.seeds) if self.demo.seeds else [self.seed]

    def adaptation_configs(self) -> List[AdaptationConfig]:
        if self.adapt is None:
            raise SpecError("spec has no 'adapt' section")
        out = []
        for c in self.adapt.configs:
            th = c.threshold
            if th.kind == "fixed":
                theta = th.theta if th.theta is not None else bank.default_fixed_threshold(self.source.n_classes)
                policy = bank.ThresholdPolicy.fixed(theta)
            else:
                policy = bank.ThresholdPolicy.dynamic(th.percentile, th.capacity)
            out.append(AdaptationConfig(
                loss_kind=c.loss, threshold_policy=policy, weight_source=c.weight_source,
                param_group=c.param_group, lr=c.lr, batch_size=c.batch_size, protocol=c.protocol,
                seed=self.seed, n_batches=self.adapt.n_batches, config_id=c.id))
        return out


def parse_spec(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise SpecError("spec file must contain a mapping at top level")
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as exc:
        raise SpecError(str(exc)) from exc


def load_spec(path) -> ExperimentSpec:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: invalid YAML: {exc}") from exc
    return parse_spec(data)
