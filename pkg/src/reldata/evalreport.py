"""Positive-class precision/recall/F1 metrics, per-language breakdowns, reports.

The positive class is label 1.  Degenerate cells (a zero denominator) are
reported as 0.0 with an explicit flag rather than silently optimistic 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from typing import Iterable, NamedTuple, Sequence

from .corpus import Task
from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


def confusion(preds: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    """Standard confusion counts with positive class = 1."""
    if len(preds) != len(labels):
        raise DataError(f"length mismatch: {len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise DataError("cannot build confusion counts from empty inputs")
    tp = fp = fn = tn = 0
    for pred, label in zip(preds, labels):
        if label == 1:
            if pred == 1:
                tp += 1
            else:
                fn += 1
        else:
            if pred == 1:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


@dataclass(frozen=True)
class Prf:
    """Precision, recall and their harmonic mean for the positive class.

    ``degenerate`` flags that at least one denominator was zero and the
    affected metrics were pinned to 0.0 by convention.
    """

    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def f1_positive(counts: ConfusionCounts) -> Prf:
    degenerate = False
    if counts.tp + counts.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision + recall == 0.0:
        return Prf(precision, recall, 0.0, True)
    return Prf(precision, recall, 2 * precision * recall / (precision + recall), degenerate)


def average_f1(f1_qc: float, f1_qi: float) -> float:
    """Arithmetic mean of the two task F1 scores, kept at full precision."""
    for value in (f1_qc, f1_qi):
        if not 0.0 <= value <= 1.0:
            raise DataError(f"F1 out of range: {value!r}")
    return (f1_qc + f1_qi) / 2


def display_metric(value: float) -> str:
    """Render a metric the way result tables do: 4 decimals, half-up.

    Binary float noise below 1e-12 is snapped away first so a true decimal
    half (e.g. 0.88645) rounds up instead of down.
    """
    snapped = Decimal(repr(value)).quantize(Decimal("1e-12"), rounding=ROUND_HALF_EVEN)
    return str(snapped.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


class EvalRow(NamedTuple):
    """One evaluated pair: where it came from and how it was decided."""

    task: Task
    language: str
    label: int
    pred: int


@dataclass
class LanguageEval:
    counts: ConfusionCounts
    metrics: Prf
    no_positives: bool


@dataclass
class TaskEval:
    counts: ConfusionCounts
    metrics: Prf
    per_language: dict[str, LanguageEval] = field(default_factory=dict)


@dataclass
class EvalReport:
    """Micro metrics per task, per-language diagnostics, and the two-task average."""

    tasks: dict[Task, TaskEval] = field(default_factory=dict)
    f1_avg: float | None = None

    def to_json(self) -> dict:
        out: dict = {"tasks": {}}
        for task, te in sorted(self.tasks.items(), key=lambda kv: kv[0].value):
            out["tasks"][task.value] = {
                "counts": {
                    "tp": te.counts.tp,
                    "fp": te.counts.fp,
                    "fn": te.counts.fn,
                    "tn": te.counts.tn,
                },
                "precision": te.metrics.precision,
                "recall": te.metrics.recall,
                "f1": te.metrics.f1,
                "f1_display": display_metric(te.metrics.f1),
                "degenerate": te.metrics.degenerate,
                "per_language": {
                    lang: {
                        "counts": {
                            "tp": le.counts.tp,
                            "fp": le.counts.fp,
                            "fn": le.counts.fn,
                            "tn": le.counts.tn,
                        },
                        "precision": le.metrics.precision,
                        "recall": le.metrics.recall,
                        "f1": le.metrics.f1,
                        "degenerate": le.metrics.degenerate,
                        "no_positives": le.no_positives,
                    }
                    for lang, le in sorted(te.per_language.items())
                },
            }
        if self.f1_avg is not None:
            out["f1_avg"] = self.f1_avg
            out["f1_avg_display"] = display_metric(self.f1_avg)
        return out


def per_language_breakdown(rows: Iterable[EvalRow]) -> dict[str, LanguageEval]:
    """Metrics within each language partition; languages without positives flagged."""
    by_language: dict[str, list[EvalRow]] = {}
    for row in rows:
        by_language.setdefault(row.language, []).append(row)
    out: dict[str, LanguageEval] = {}
    for language, group in by_language.items():
        counts = confusion([r.pred for r in group], [r.label for r in group])
        out[language] = LanguageEval(
            counts=counts,
            metrics=f1_positive(counts),
            no_positives=(counts.tp + counts.fn == 0),
        )
    return out


def build_report(rows: Iterable[EvalRow]) -> EvalReport:
    """Aggregate rows into micro per-task metrics plus per-language diagnostics."""
    rows = list(rows)
    if not rows:
        raise DataError("cannot evaluate an empty row set")
    report = EvalReport()
    for task in (Task.QC, Task.QI):
        group = [r for r in rows if r.task is task]
        if not group:
            continue
        counts = confusion([r.pred for r in group], [r.label for r in group])
        report.tasks[task] = TaskEval(
            counts=counts,
            metrics=f1_positive(counts),
            per_language=per_language_breakdown(group),
        )
    if Task.QC in report.tasks and Task.QI in report.tasks:
        report.f1_avg = average_f1(
            report.tasks[Task.QC].metrics.f1, report.tasks[Task.QI].metrics.f1
        )
    return report
