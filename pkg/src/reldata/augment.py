"""Translation-based augmentation: synthesize records for missing languages.

Queries from existing source-language records are translated into each
target language while the candidate and label are copied verbatim, so the
relevance judgment itself is never altered.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .corpus import (
    CorpusStats,
    Origin,
    RelevanceRecord,
    Task,
    make_record,
    normalize_language,
)
from .errors import ConfigError, ProviderError
from .hashing import derive_seed
from .providers import TranslationRequest, Translator, map_bounded


class SourcePolicy(str, Enum):
    """How source records are drawn across the existing languages."""

    UNIFORM = "uniform"  # flat pool: every eligible record equally likely
    WEIGHTED = "weighted"  # quota split evenly across source languages first


@dataclass(frozen=True)
class AugmentPlan:
    task: Task
    target_languages: frozenset[str]
    per_language_quota: int
    master_seed: int
    source_language_policy: SourcePolicy = SourcePolicy.UNIFORM

    def __post_init__(self) -> None:
        if self.per_language_quota < 1:
            raise ConfigError(f"per-language quota must be >= 1, got {self.per_language_quota}")
        object.__setattr__(
            self,
            "target_languages",
            frozenset(normalize_language(lang) for lang in self.target_languages),
        )


def missing_languages(
    train_stats: CorpusStats, eval_languages: set[str], task: Task | None = None
) -> set[str]:
    """Evaluation languages with no training records at all."""
    present = set(train_stats.languages(task))
    return {normalize_language(lang) for lang in eval_languages} - present


def default_quota(train_stats: CorpusStats, task: Task) -> int:
    """Mean per-language count of the languages that do have training data."""
    langs = train_stats.languages(task)
    if not langs:
        raise ConfigError("cannot derive a quota from an empty training corpus")
    total = train_stats.total(task)
    return max(1, round(total / len(langs)))


@dataclass
class LanguageAugmentReport:
    requested: int = 0
    emitted: int = 0
    failed: int = 0
    collapsed: int = 0


@dataclass
class AugmentReport:
    per_language: dict[str, LanguageAugmentReport] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    ignored_non_original: int = 0

    @property
    def emitted(self) -> int:
        return sum(lr.emitted for lr in self.per_language.values())

    @property
    def failed(self) -> int:
        return sum(lr.failed for lr in self.per_language.values())


def _allocate_weighted(pools: dict[str, list], quota: int, rng: random.Random) -> list:
    """Split the quota evenly across source languages (largest remainder), then
    sample uniformly within each language pool."""
    languages = sorted(pools)
    base, extra = divmod(quota, len(languages))
    chosen = []
    for i, lang in enumerate(languages):
        want = base + (1 if i < extra else 0)
        pool = pools[lang]
        if want <= len(pool):
            chosen.extend(rng.sample(pool, want))
        else:
            chosen.extend(pool)
            chosen.extend(rng.choices(pool, k=want - len(pool)))
    return chosen


def augment_by_translation(
    records: Sequence[RelevanceRecord],
    plan: AugmentPlan,
    translator: Translator,
    max_in_flight: int = 16,
) -> tuple[list[RelevanceRecord], AugmentReport]:
    """Emit per target language exactly the quota of translated records.

    Fewer appear only when translation fails (counted per language) or when
    derived records collapse as exact duplicates.  Selection, seeds, and
    output order depend only on (records, plan), never on scheduling.
    """
    report = AugmentReport()
    originals = [rec for rec in records if rec.origin is Origin.ORIGINAL]
    report.ignored_non_original = len(records) - len(originals)
    if report.ignored_non_original:
        report.warnings.append(
            f"ignored {report.ignored_non_original} non-original records as translation sources"
        )
    present = {rec.language for rec in originals}

    jobs: list[tuple[int, RelevanceRecord, str]] = []  # (record_seed, source, target)
    for target in sorted(plan.target_languages):
        lang_report = report.per_language.setdefault(target, LanguageAugmentReport())
        lang_report.requested = plan.per_language_quota
        if target in present:
            report.warnings.append(
                f"target language {target!r} already has training records"
            )
        pool = sorted(
            (rec for rec in originals if rec.language != target), key=lambda r: r.id
        )
        if not pool:
            report.warnings.append(f"no source records available for target {target!r}")
            continue
        rng = random.Random(derive_seed(plan.master_seed, "augment-select", target))
        quota = plan.per_language_quota
        if plan.source_language_policy is SourcePolicy.WEIGHTED:
            pools: dict[str, list[RelevanceRecord]] = {}
            for rec in pool:
                pools.setdefault(rec.language, []).append(rec)
            chosen = _allocate_weighted(pools, quota, rng)
        elif quota <= len(pool):
            chosen = rng.sample(pool, quota)
        else:
            report.warnings.append(
                f"quota {quota} exceeds the {len(pool)} available sources for {target!r};"
                " re-using sources with replacement"
            )
            chosen = list(pool) + rng.choices(pool, k=quota - len(pool))
        for source in chosen:
            jobs.append((derive_seed(plan.master_seed, source.id, target), source, target))

    def translate_one(job: tuple[int, RelevanceRecord, str]) -> RelevanceRecord | None:
        _, source, target = job
        try:
            text = translator.translate(
                TranslationRequest(
                    text=source.query,
                    source_language=source.language,
                    target_language=target,
                )
            )
        except ProviderError:
            return None
        return make_record(
            task=source.task,
            query=text,
            language=target,
            candidate=source.candidate,
            label=source.label,
            origin=Origin.TRANSLATED,
            source_id=source.id,
        )

    results = map_bounded(translate_one, jobs, max_in_flight)

    # assembly order is (per-record seed, source id): independent of completion order
    assembled = sorted(
        zip(jobs, results), key=lambda pair: (pair[0][0], pair[0][1].id)
    )
    seen_keys: set[tuple[str, str, str, int]] = set()
    out: list[RelevanceRecord] = []
    for (seed, source, target), produced in assembled:
        lang_report = report.per_language[target]
        if produced is None:
            lang_report.failed += 1
            continue
        key = produced.content_key()
        if key in seen_keys:
            lang_report.collapsed += 1
            continue
        seen_keys.add(key)
        out.append(produced)
        lang_report.emitted += 1
    return out, report
