"""Experiment commands behind the CLI. Each writes its outputs atomically and
returns what it wrote, so the same paths are usable from Python."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import netcore as nc
from ..adapt import ComparisonRow, compare_runs
from ..checkpoint import CheckpointError, atomic_write_bytes, load_model, save_model
from ..scenarios import make_source
from . import report
from .config import ExperimentSpec, SpecError
from .verify import CheckResult, run_checks

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "source.ckpt"
REPORT_NAME = "report.csv"
TRACE_NAME = "trace.csv"
DEMO_NAME = "demo_cl.csv"


def _out_dir(spec: ExperimentSpec, out: Optional[str]) -> Path:
    path = Path(out or spec.out_dir or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def source_data(spec: ExperimentSpec, seed: int):
    s = spec.source
    return make_source(s.n_classes, s.dim, s.n_per_class, s.spread, seed)


def train_source_model(spec: ExperimentSpec, seed: int) -> nc.TrainResult:
    train, test = source_data(spec, seed)
    t = spec.train
    return nc.train_source(nc.mlp_new(spec.dims, seed), train, t.epochs, t.lr, t.batch_size, seed, test=test)


@dataclass
class TrainSummary:
    checkpoint: Path
    train_accuracy: float
    test_accuracy: float

    def line(self) -> str:
        return f"train_accuracy={report.fmt(self.train_accuracy)} test_accuracy={report.fmt(self.test_accuracy)}"


def cmd_train_source(spec: ExperimentSpec, out: Optional[str] = None) -> TrainSummary:
    out_dir = _out_dir(spec, out)
    res = train_source_model(spec, spec.seed)
    path = out_dir / CHECKPOINT_NAME
    save_model(path, res.model, {"source": spec.source.model_dump(), "data_seed": spec.seed,
                                 "train_accuracy": res.train_accuracy, "test_accuracy": res.test_accuracy})
    return TrainSummary(path, res.train_accuracy, res.test_accuracy)


@dataclass
class AdaptSummary:
    report: Path
    trace: Path
    rows: List[report.ReportRow]
    comparison: List[ComparisonRow]

    def table(self) -> str:
        body = [[r.config_id, report.fmt(r.mean), report.fmt(r.sd), str(len(r.seeds))] for r in self.comparison]
        return report.render_table(["config", "mean_accuracy", "sd", "seeds"], body)


def cmd_adapt(spec: ExperimentSpec, checkpoint, out: Optional[str] = None) -> AdaptSummary:
    configs = spec.adaptation_configs()
    model, meta = load_model(checkpoint)
    if model.n_features != spec.source.dim or model.n_classes != spec.source.n_classes:
        raise SpecError(f"checkpoint dims {model.dims} do not match spec (d={spec.source.dim}, "
                        f"C={spec.source.n_classes})")
    data_seed = int(meta.get("data_seed", spec.seed))
    _, test = source_data(spec, data_seed)
    comparison = compare_runs(configs, model, spec.corruptions, test, spec.adapt_seeds())
    runs = [rep for row in comparison for rep in row.reports]
    rows = [r for rep in runs for r in report.rows_from_report(rep)]
    out_dir = _out_dir(spec, out)
    report.write_report(out_dir / REPORT_NAME, rows)
    atomic_write_bytes(out_dir / TRACE_NAME, report.render_trace(runs).encode())
    return AdaptSummary(out_dir / REPORT_NAME, out_dir / TRACE_NAME, rows, comparison)


@dataclass
class DemoSummary:
    path: Path
    columns: List[str]
    accuracy: np.ndarray      # seeds x columns
    seeds: List[int]

    def table(self) -> str:
        body = [[str(s)] + [report.fmt(a) for a in row] for s, row in zip(self.seeds, self.accuracy)]
        body.append(["mean"] + [report.fmt(a) for a in self.accuracy.mean(axis=0)])
        return report.render_table(["seed"] + self.columns, body)


def cmd_demo_cl(spec: ExperimentSpec, out: Optional[str] = None) -> DemoSummary:
    """Known-complementary-label training for each n in ``demo.negatives`` plus a supervised baseline."""
    t = spec.train
    columns = [f"N={n}" for n in spec.demo.negatives] + ["baseline"]
    seeds = spec.demo_seeds()
    acc = np.zeros((len(seeds), len(columns)))
    for i, seed in enumerate(seeds):
        train, test = source_data(spec, seed)
        init = nc.mlp_new(spec.dims, seed)
        for j, n in enumerate(spec.demo.negatives):
            res = nc.train_with_known_cl(init, train, n, t.epochs, t.lr, seed, t.batch_size, test=test)
            acc[i, j] = res.test_accuracy
        acc[i, -1] = train_source_model(spec, seed).test_accuracy
    summary = DemoSummary(_out_dir(spec, out) / DEMO_NAME, columns, acc, seeds)
    lines = [",".join(["seed"] + columns)]
    lines += [",".join([str(s)] + [report.fmt(a) for a in row]) for s, row in zip(seeds, acc)]
    lines.append(",".join(["mean"] + [report.fmt(a) for a in acc.mean(axis=0)]))
    atomic_write_bytes(summary.path, ("\n".join(lines) + "\n").encode())
    return summary


def cmd_verify(level: str = "fast") -> List[CheckResult]:
    return run_checks(level)


__all__ = ["cmd_train_source", "cmd_adapt", "cmd_demo_cl", "cmd_verify", "CheckpointError"]
