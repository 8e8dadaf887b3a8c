"""Two-token probability normalization, thresholded decisions, calibration.

The relevance probability is the two-way softmax of the yes/no log-scores,
computed max-subtracted so extreme inputs stay finite.  Decisions use an
inclusive boundary: predict relevant when p_yes >= threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import RelevanceRecord, Task
from .errors import ConfigError, DataError, ProviderError
from .evalreport import confusion, f1_positive
from .providers import ScorePair, Scorer, map_bounded


def normalize_yes(score: ScorePair) -> float:
    """Probability of "yes" from the pair of log-scores (two-way softmax)."""
    a, b = score.logp_yes, score.logp_no
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DataError(f"non-finite log-scores: {a!r}, {b!r}")
    m = a if a >= b else b
    ey = math.exp(a - m)
    en = math.exp(b - m)
    return ey / (ey + en)


def decide(p_yes: float, threshold: float) -> int:
    """1 when p_yes >= threshold (boundary inclusive), else 0."""
    if not 0.0 <= p_yes <= 1.0:
        raise DataError(f"p_yes out of [0,1]: {p_yes!r}")
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold out of [0,1]: {threshold!r}")
    return 1 if p_yes >= threshold else 0


@dataclass(frozen=True)
class ScoredRecord:
    """A record's identity plus its normalized relevance probability."""

    id: str
    task: Task
    language: str
    label: int | None
    p_yes: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.p_yes) and 0.0 <= self.p_yes <= 1.0):
            raise DataError(f"p_yes out of [0,1]: {self.p_yes!r}")


@dataclass
class ScoringReport:
    scored: int = 0
    failed: int = 0
    failed_ids: list[str] | None = None


def score_records(
    records: Sequence[RelevanceRecord],
    scorer: Scorer,
    max_in_flight: int = 16,
) -> tuple[list[ScoredRecord], ScoringReport]:
    """Score every record; failures are counted and excluded, not fatal."""

    def one(rec: RelevanceRecord) -> ScoredRecord | None:
        try:
            pair = scorer.score(rec.task, rec.query, rec.candidate, rec.language)
        except ProviderError:
            return None
        return ScoredRecord(
            id=rec.id,
            task=rec.task,
            language=rec.language,
            label=rec.label,
            p_yes=normalize_yes(pair),
        )

    results = map_bounded(one, records, max_in_flight)
    report = ScoringReport(failed_ids=[])
    scored: list[ScoredRecord] = []
    for rec, result in zip(records, results):
        if result is None:
            report.failed += 1
            report.failed_ids.append(rec.id)
        else:
            scored.append(result)
            report.scored += 1
    return scored, report


def save_scored(scored: Iterable[ScoredRecord], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in scored:
            obj = {
                "id": rec.id,
                "task": rec.task.value,
                "language": rec.language,
                "label": rec.label,
                "p_yes": rec.p_yes,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_scored(path: str | Path) -> list[ScoredRecord]:
    records: list[ScoredRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    ScoredRecord(
                        id=str(obj["id"]),
                        task=Task(obj["task"]),
                        language=str(obj["language"]),
                        label=obj.get("label"),
                        p_yes=float(obj["p_yes"]),
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{line_no}: bad scored record: {exc}") from exc
    return records


@dataclass
class CalibrationResult:
    """Best decision threshold for one task, with the full sweep behind it."""

    task: Task
    best_threshold: float
    best_f1: float
    sweep: list[tuple[float, float]]

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "best_threshold": self.best_threshold,
            "best_f1": self.best_f1,
            "sweep": [[t, f] for t, f in self.sweep],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationResult":
        return cls(
            task=Task(obj["task"]),
            best_threshold=float(obj["best_threshold"]),
            best_f1=float(obj["best_f1"]),
            sweep=[(float(t), float(f)) for t, f in obj["sweep"]],
        )


def _f1_at(scored: Sequence[ScoredRecord], threshold: float) -> float:
    preds = [1 if rec.p_yes >= threshold else 0 for rec in scored]
    labels = [rec.label for rec in scored]
    return f1_positive(confusion(preds, labels)).f1


def _check_labeled(scored: Sequence[ScoredRecord]) -> None:
    if not scored:
        raise DataError("cannot calibrate on an empty score set")
    if any(rec.label is None for rec in scored):
        raise DataError("calibration needs labels on every scored record")
    if not any(rec.label == 1 for rec in scored):
        raise DataError("no positive labels: F1 is undefined at every threshold")


def sweep_thresholds(
    scored: Sequence[ScoredRecord], thresholds: Sequence[float]
) -> list[tuple[float, float]]:
    """Positive-class F1 at each threshold, in the given order."""
    _check_labeled(scored)
    return [(t, _f1_at(scored, t)) for t in thresholds]


def threshold_grid(grid_step: float = 0.01) -> list[float]:
    """Evenly spaced thresholds over [0, 1] including both endpoints."""
    if not 0.0 < grid_step <= 0.5:
        raise ConfigError(f"grid step out of (0, 0.5]: {grid_step!r}")
    inverse = 1.0 / grid_step
    if abs(inverse - round(inverse)) < 1e-9:
        steps = round(inverse)
        # i/steps keeps round decimals like 0.2 and 0.4 exactly representable
        return [i / steps for i in range(steps + 1)]
    grid = []
    t = 0.0
    while t < 1.0:
        grid.append(t)
        t += grid_step
    grid.append(1.0)
    return grid


def _best_point(sweep: Sequence[tuple[float, float]]) -> tuple[float, float]:
    # smallest threshold attaining the max; ascending scan with strict '>' does that
    best_t, best_f1 = sweep[0]
    for t, f in sweep[1:]:
        if f > best_f1:
            best_t, best_f1 = t, f
    return best_t, best_f1


def calibrate_threshold(
    scored: Sequence[ScoredRecord], grid_step: float = 0.01
) -> CalibrationResult:
    """Grid-sweep the threshold and keep the smallest argmax of positive-class F1."""
    _check_labeled(scored)
    tasks = {rec.task for rec in scored}
    if len(tasks) != 1:
        raise DataError(f"calibration expects a single task, got {sorted(t.value for t in tasks)}")
    sweep = sweep_thresholds(scored, threshold_grid(grid_step))
    best_t, best_f1 = _best_point(sweep)
    return CalibrationResult(
        task=tasks.pop(), best_threshold=best_t, best_f1=best_f1, sweep=sweep
    )


def calibrate_exact(scored: Sequence[ScoredRecord]) -> CalibrationResult:
    """Exact mode: sweep only the cut points where predictions can change.

    Candidate thresholds are 0.0 plus every distinct score; the optimum over
    all real thresholds is always attained at one of these.
    """
    _check_labeled(scored)
    tasks = {rec.task for rec in scored}
    if len(tasks) != 1:
        raise DataError(f"calibration expects a single task, got {sorted(t.value for t in tasks)}")
    cuts = sorted({0.0} | {rec.p_yes for rec in scored})
    sweep = sweep_thresholds(scored, cuts)
    best_t, best_f1 = _best_point(sweep)
    return CalibrationResult(
        task=tasks.pop(), best_threshold=best_t, best_f1=best_f1, sweep=sweep
    )


def save_calibration(result: CalibrationResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, indent=2)
        fh.write("\n")


def load_calibration(path: str | Path) -> CalibrationResult:
    with open(path, "r", encoding="utf-8") as fh:
        return CalibrationResult.from_json(json.load(fh))


def save_sweep_csv(result: CalibrationResult, path: str | Path) -> None:
    """Sweep curve as CSV for external plotting tools."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,f1\n")
        for t, f in result.sweep:
            fh.write(f"{t!r},{f!r}\n")


def apply_transform(
    scored: Sequence[ScoredRecord], transform: Callable[[float], float]
) -> list[ScoredRecord]:
    """Map a strictly increasing transform over every score (testing aid)."""
    return [
        ScoredRecord(
            id=rec.id,
            task=rec.task,
            language=rec.language,
            label=rec.label,
            p_yes=transform(rec.p_yes),
        )
        for rec in scored
    ]
