"""Report CSV schema.

``report.csv`` columns, in order::

    config_id, corruption, severity, accuracy, mean_threshold, batches, seed

One row per (config, seed, corruption) in scenario order, followed by a
``corruption = mean`` row for that (config, seed) whose ``severity`` is empty.
Floats carry 6 significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional

from ..checkpoint import atomic_write_bytes

HEADER = ("config_id", "corruption", "severity", "accuracy", "mean_threshold", "batches", "seed")
MEAN_ROW = "mean"


@dataclass(frozen=True)
class ReportRow:
    config_id: str
    corruption: str
    severity: Optional[int]
    accuracy: float
    mean_threshold: float
    batches: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


def fmt(x: float) -> str:
    return "%.6g" % x


def rows_from_report(report) -> List[ReportRow]:
    """Rows for one :class:`~cltta.adapt.RunReport`, mean row last."""
    rows = []
    for i, name in enumerate(report.corruptions):
        kind, _, sev = name.rpartition("-")
        rows.append(ReportRow(report.config.name, kind, int(sev), report.accuracy[i],
                              report.mean_threshold(i), len(report.batch_accuracy[i]), report.seed))
    thresholds = [r.mean_threshold for r in rows]
    rows.append(ReportRow(report.config.name, MEAN_ROW, None, report.mean_accuracy,
                          sum(thresholds) / len(thresholds), sum(r.batches for r in rows), report.seed))
    return rows


def render_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([r.config_id, r.corruption, "" if r.severity is None else r.severity,
                    fmt(r.accuracy), fmt(r.mean_threshold), r.batches, r.seed])
    return buf.getvalue()


def write_report(path, rows: Iterable[ReportRow]) -> None:
    atomic_write_bytes(path, render_csv(rows).encode())


def parse_csv(text: str) -> List[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise ValueError(f"unexpected report header {header}")
    rows = []
    for rec in reader:
        if len(rec) != len(HEADER):
            raise ValueError(f"malformed report row {rec}")
        cid, corr, sev, acc, th, batches, seed = rec
        rows.append(ReportRow(cid, corr, int(sev) if sev else None, float(acc), float(th),
                              int(batches), int(seed)))
    return rows


def read_report(path) -> List[ReportRow]:
    return parse_csv(Path(path).read_text())


TRACE_HEADER = ("config_id", "seed", "corruption", "batch", "accuracy", "mean_threshold")


def render_trace(reports) -> str:
    """Per-batch online accuracy and mean threshold, for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for rep in reports:
        for name, accs, thetas in zip(rep.corruptions, rep.batch_accuracy, rep.thresholds):
            for b, (a, th) in enumerate(zip(accs, thetas)):
                w.writerow([rep.config.name, rep.seed, name, b, fmt(a), fmt(float(th.mean()))])
    return buf.getvalue()


def render_table(header: List[str], rows: List[List[str]]) -> str:
    """Plain fixed-width text table."""
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    return "\n".join([line(header)] + [line(r) for r in rows])
