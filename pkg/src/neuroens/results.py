"""Experiment result rows: aggregation, CSV round-trip, text rendering.

One row summarizes one (model, smoothing, pretraining, learning rate)
configuration over its repetitions. The CSV keeps full float precision via
``repr`` so a parsed table is numerically identical to the saved one; the
text rendering is what goes into a report (mean +/- sample std, 4 decimals).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

__all__ = ["RESULT_COLUMNS", "ResultRow", "ResultTable", "aggregate_accuracies",
           "save_results", "load_results", "render_results"]

RESULT_COLUMNS = ["model", "smoothed", "pretrained", "learning_rate",
                  "acc_mean", "acc_std", "rep_accuracies"]


def aggregate_accuracies(values) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; a single value has std 0."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no accuracies to aggregate")
    n = len(vals)
    mean = sum(vals) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class ResultRow:
    model: int
    smoothed: int
    pretrained: int
    learning_rate: float
    acc_mean: float
    acc_std: float
    rep_accuracies: tuple[float, ...]

    def __post_init__(self):
        if self.model not in (1, 2):
            raise ValueError(f"model must be 1 or 2, got {self.model}")
        if self.smoothed not in (0, 1):
            raise ValueError(f"smoothed must be 0 or 1, got {self.smoothed}")
        if self.pretrained not in (0, 1):
            raise ValueError(f"pretrained must be 0 or 1, got {self.pretrained}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        # bools pass the 0/1 check but would round-trip through CSV as "True"
        object.__setattr__(self, "smoothed", int(self.smoothed))
        object.__setattr__(self, "pretrained", int(self.pretrained))
        object.__setattr__(self, "rep_accuracies", tuple(float(a) for a in self.rep_accuracies))
        for acc in (self.acc_mean, *self.rep_accuracies):
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy must lie in [0, 1], got {acc}")
        if self.acc_std < 0:
            raise ValueError(f"acc_std must be non-negative, got {self.acc_std}")

    @classmethod
    def from_accuracies(cls, model, smoothed, pretrained, learning_rate, accuracies) -> "ResultRow":
        mean, std = aggregate_accuracies(accuracies)
        return cls(model=model, smoothed=smoothed, pretrained=pretrained,
                   learning_rate=learning_rate, acc_mean=mean, acc_std=std,
                   rep_accuracies=tuple(accuracies))


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))


def save_results(table: ResultTable, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in table.rows:
            writer.writerow([
                r.model, r.smoothed, r.pretrained, repr(r.learning_rate),
                repr(r.acc_mean), repr(r.acc_std),
                ";".join(repr(a) for a in r.rep_accuracies),
            ])


def load_results(path) -> ResultTable:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty results file") from None
        if header != RESULT_COLUMNS:
            raise ValueError(f"{path}: bad results header {header!r}")
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != len(RESULT_COLUMNS):
                raise ValueError(f"{path}:{line_no}: expected {len(RESULT_COLUMNS)} fields")
            reps = tuple(float(a) for a in rec[6].split(";")) if rec[6] else ()
            rows.append(ResultRow(model=int(rec[0]), smoothed=int(rec[1]), pretrained=int(rec[2]),
                                  learning_rate=float(rec[3]), acc_mean=float(rec[4]),
                                  acc_std=float(rec[5]), rep_accuracies=reps))
    return ResultTable(rows=tuple(rows))


_RENDER_HEAD = ("Model", "Use Smoothed Scan", "Pre Trained", "Learning Rate", "Accuracy")


def render_results(table: ResultTable) -> str:
    """Aligned text table; smoothing does not apply to model 1, shown as N/A."""
    if not table.rows:
        raise ValueError("cannot render an empty result table")
    body = []
    for r in table.rows:
        smoothed = "N/A" if r.model == 1 else ("Yes" if r.smoothed else "No")
        body.append((
            str(r.model),
            smoothed,
            "Yes" if r.pretrained else "No",
            repr(r.learning_rate),
            f"{r.acc_mean:.4f} ± {r.acc_std:.4f}",
        ))
    widths = [max(len(_RENDER_HEAD[i]), *(len(row[i]) for row in body))
              for i in range(len(_RENDER_HEAD))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(_RENDER_HEAD, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
