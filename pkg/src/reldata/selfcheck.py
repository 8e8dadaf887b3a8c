"""Self-validation filtering: remove records a trained scorer confidently contradicts.

Every record is scored and its yes-probability compared against the label.
A contradiction means the scorer is at least tau-confident in the opposite
label.  Records the scorer could not judge are always kept: deletion needs
affirmative evidence, not a network timeout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .corpus import Origin, RelevanceRecord, Task
from .errors import ConfigError, ProviderError
from .providers import Scorer, map_bounded
from .scoring import normalize_yes


class FilterAction(str, Enum):
    REMOVE = "remove"
    FLAG_ONLY = "flag_only"


@dataclass(frozen=True)
class FilterConfig:
    confidence_threshold: float = 0.9
    action: FilterAction = FilterAction.REMOVE

    def __post_init__(self) -> None:
        if not 0.5 < self.confidence_threshold <= 1.0:
            raise ConfigError(
                "confidence threshold must be in (0.5, 1.0]:"
                f" got {self.confidence_threshold!r}"
            )


@dataclass(frozen=True)
class FilterVerdict:
    """One record's scoring outcome; self-contained so reports need no corpus."""

    record_id: str
    task: Task
    language: str
    origin: Origin
    label: int
    p_yes: float | None
    contradiction: bool
    removed: bool
    scored: bool


def is_contradiction(label: int, p_yes: float, tau: float) -> bool:
    """High-confidence disagreement with the label.

    The confidence in the opposite answer must reach tau: p_yes >= tau
    against label 0, p_no = 1 - p_yes >= tau against label 1.  Phrased this
    way both boundaries are inclusive at the same probability mass; comparing
    p_yes against 1 - tau instead would move the label-1 boundary by one ulp
    for tau values like 0.9.
    """
    if label == 0:
        return p_yes >= tau
    return 1.0 - p_yes >= tau


def validate_corpus(
    records: Sequence[RelevanceRecord],
    scorer: Scorer,
    config: FilterConfig,
    max_in_flight: int = 16,
) -> tuple[list[RelevanceRecord], list[FilterVerdict]]:
    """Single scoring pass over the corpus; returns (kept records, all verdicts).

    Verdicts cover every input in input order.  With action=REMOVE the kept
    list drops contradicted records; FLAG_ONLY keeps the corpus untouched
    while emitting identical contradiction flags.
    """

    def score_one(rec: RelevanceRecord) -> float | None:
        try:
            return normalize_yes(scorer.score(rec.task, rec.query, rec.candidate, rec.language))
        except ProviderError:
            return None

    probabilities = map_bounded(score_one, records, max_in_flight)

    tau = config.confidence_threshold
    verdicts: list[FilterVerdict] = []
    kept: list[RelevanceRecord] = []
    for rec, p_yes in zip(records, probabilities):
        if p_yes is None:
            contradiction = False
            removed = False
            scored = False
        else:
            contradiction = is_contradiction(rec.label, p_yes, tau)
            removed = contradiction and config.action is FilterAction.REMOVE
            scored = True
        verdicts.append(
            FilterVerdict(
                record_id=rec.id,
                task=rec.task,
                language=rec.language,
                origin=rec.origin,
                label=rec.label,
                p_yes=p_yes,
                contradiction=contradiction,
                removed=removed,
                scored=scored,
            )
        )
        if not removed:
            kept.append(rec)
    return kept, verdicts


@dataclass
class FilterReport:
    total: int = 0
    kept: int = 0
    removed: int = 0
    unscored: int = 0
    by_task: dict[str, dict[str, int]] = field(default_factory=dict)
    by_language: dict[str, dict[str, int]] = field(default_factory=dict)
    by_origin: dict[str, dict[str, int]] = field(default_factory=dict)
    top_contradictions: list[dict] = field(default_factory=list)
    all_removed_warning: bool = False

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "removed": self.removed,
            "unscored": self.unscored,
            "by_task": self.by_task,
            "by_language": self.by_language,
            "by_origin": self.by_origin,
            "top_contradictions": self.top_contradictions,
            "all_removed_warning": self.all_removed_warning,
        }


def _bump(table: dict[str, dict[str, int]], key: str, outcome: str) -> None:
    cell = table.setdefault(key, {"kept": 0, "removed": 0, "unscored": 0})
    cell[outcome] += 1


def filter_report(verdicts: Sequence[FilterVerdict], top_n: int = 20) -> FilterReport:
    """Aggregate verdicts; lists the most confident contradictions for audit."""
    report = FilterReport(total=len(verdicts))
    for verdict in verdicts:
        if not verdict.scored:
            outcome = "unscored"
            report.unscored += 1
        elif verdict.removed:
            outcome = "removed"
            report.removed += 1
        else:
            outcome = "kept"
            report.kept += 1
        _bump(report.by_task, verdict.task.value, outcome)
        _bump(report.by_language, verdict.language, outcome)
        _bump(report.by_origin, verdict.origin.value, outcome)

    contradictions = [v for v in verdicts if v.contradiction]
    # confidence in the opposite label: p_yes against label 0, 1-p_yes against label 1
    contradictions.sort(
        key=lambda v: (-(v.p_yes if v.label == 0 else 1.0 - v.p_yes), v.record_id)
    )
    report.top_contradictions = [
        {
            "record_id": v.record_id,
            "label": v.label,
            "p_yes": v.p_yes,
            "removed": v.removed,
        }
        for v in contradictions[:top_n]
    ]
    if report.total and report.removed == report.total:
        report.all_removed_warning = True
    return report
