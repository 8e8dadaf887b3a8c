"""Canonical data model for query-category / query-item relevance corpora.

A corpus is a line-delimited UTF-8 file, one JSON object per line, with
fields ``id?``, ``task`` ("qc"|"qi"), ``query``, ``language``, ``candidate``,
``label`` (0|1), ``origin?``, ``source_id?``.  Records are immutable values;
everything here is pure and safe to share across threads.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from string import Formatter
from typing import Iterable

from .errors import ConfigError, DataError
from .hashing import content_id


class Task(str, Enum):
    """The two relevance tasks: query-category and query-item."""

    QC = "qc"
    QI = "qi"


class Origin(str, Enum):
    """How a record entered the corpus."""

    ORIGINAL = "original"
    TRANSLATED = "translated"
    SYNTHETIC_NEGATIVE = "synthetic_negative"


# ISO 639-1 two-letter codes; unknown codes are accepted but reported so a
# competition language never silently disappears.
ISO_639_1 = frozenset(
    "aa ab ae af ak am an ar as av ay az ba be bg bh bi bm bn bo br bs ca ce ch co cr cs"
    " cu cv cy da de dv dz ee el en eo es et eu fa ff fi fj fo fr fy ga gd gl gn gu gv"
    " ha he hi ho hr ht hu hy hz ia id ie ig ii ik io is it iu ja jv ka kg ki kj kk kl"
    " km kn ko kr ks ku kv kw ky la lb lg li ln lo lt lu lv mg mh mi mk ml mn mr ms mt"
    " my na nb nd ne ng nl nn no nr nv ny oc oj om or os pa pi pl ps pt qu rm rn ro ru"
    " rw sa sc sd se sg si sk sl sm sn so sq sr ss st su sv sw ta te tg th ti tk tl tn"
    " to tr ts tt tw ty ug uk ur uz ve vi vo wa wo xh yi yo za zh zu".split()
)


def normalize_language(code: str) -> str:
    return code.strip().lower()


@dataclass(frozen=True)
class RelevanceRecord:
    """One labeled (query, candidate) pair.

    ``candidate`` is a rendered category path for QC, an item title for QI.
    ``label`` 1 means relevant ("yes"), 0 irrelevant ("no").
    """

    id: str
    task: Task
    query: str
    language: str
    candidate: str
    label: int
    origin: Origin = Origin.ORIGINAL
    source_id: str | None = None

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise DataError("record query is empty")
        if not self.candidate.strip():
            raise DataError("record candidate is empty")
        # bool is an int subclass; JSON true/false must not pass as labels
        if isinstance(self.label, bool) or self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if (self.origin is Origin.ORIGINAL) != (self.source_id is None):
            raise DataError(
                f"origin {self.origin.value!r} inconsistent with source_id {self.source_id!r}"
            )

    def content_key(self) -> tuple[str, str, str, int]:
        return (self.task.value, self.query, self.candidate, self.label)


def record_content_id(task: Task, query: str, candidate: str, label: int) -> str:
    """Deterministic id from the identity fields, stable across runs."""
    return content_id("\x1f".join((task.value, query, candidate, str(label))))


def make_record(
    task: Task,
    query: str,
    language: str,
    candidate: str,
    label: int,
    origin: Origin = Origin.ORIGINAL,
    source_id: str | None = None,
    id: str | None = None,
) -> RelevanceRecord:
    """Build a record, assigning the content-hash id when none is given."""
    return RelevanceRecord(
        id=id or record_content_id(task, query, candidate, label),
        task=task,
        query=query,
        language=normalize_language(language),
        candidate=candidate,
        label=label,
        origin=origin,
        source_id=source_id,
    )


@dataclass(frozen=True)
class CategoryPath:
    """Hierarchical category path, e.g. Electronics > Audio Devices > Headphones."""

    segments: tuple[str, ...]

    SEPARATOR = " > "

    def __post_init__(self) -> None:
        if not self.segments:
            raise DataError("category path needs at least one segment")
        for seg in self.segments:
            if not seg.strip():
                raise DataError("category path segment is empty")

    def render(self) -> str:
        return self.SEPARATOR.join(self.segments)

    @classmethod
    def parse(cls, text: str) -> "CategoryPath":
        return cls(tuple(part for part in text.split(cls.SEPARATOR)))


@dataclass
class LabelCounts:
    positive: int = 0
    negative: int = 0

    @property
    def total(self) -> int:
        return self.positive + self.negative

    @property
    def positive_ratio(self) -> float:
        return self.positive / self.total if self.total else 0.0


@dataclass
class CorpusStats:
    """Record counts per (task, split, language) and label balance per (task, language)."""

    split_counts: dict[tuple[Task, str, str], int] = field(default_factory=dict)
    label_counts: dict[tuple[Task, str], LabelCounts] = field(default_factory=dict)

    def record_count(self, task: Task, split: str, language: str) -> int:
        return self.split_counts.get((task, split, language), 0)

    def total(self, task: Task | None = None, split: str | None = None) -> int:
        return sum(
            n
            for (t, s, _), n in self.split_counts.items()
            if (task is None or t is task) and (split is None or s == split)
        )

    def languages(self, task: Task | None = None) -> list[str]:
        langs = {
            lang
            for (t, _, lang), n in self.split_counts.items()
            if n > 0 and (task is None or t is task)
        }
        return sorted(langs)

    def splits(self, task: Task | None = None) -> list[str]:
        return sorted(
            {s for (t, s, _) in self.split_counts if task is None or t is task}
        )

    def positive_ratio(self, task: Task, language: str) -> float:
        counts = self.label_counts.get((task, language))
        return counts.positive_ratio if counts else 0.0

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        merged = CorpusStats(dict(self.split_counts), {})
        for key, counts in self.label_counts.items():
            merged.label_counts[key] = LabelCounts(counts.positive, counts.negative)
        for key, n in other.split_counts.items():
            merged.split_counts[key] = merged.split_counts.get(key, 0) + n
        for key, counts in other.label_counts.items():
            cell = merged.label_counts.setdefault(key, LabelCounts())
            cell.positive += counts.positive
            cell.negative += counts.negative
        return merged

    def to_json(self) -> dict:
        """Machine-readable layout mirroring the stats table: languages as columns."""
        tasks = sorted({t for (t, _, _) in self.split_counts}, key=lambda t: t.value)
        out: dict = {"tasks": {}}
        for task in tasks:
            langs = self.languages(task)
            rows = {
                split: {lang: self.record_count(task, split, lang) for lang in langs}
                for split in self.splits(task)
            }
            balance = {
                lang: {
                    "positive": self.label_counts[(task, lang)].positive,
                    "negative": self.label_counts[(task, lang)].negative,
                    "positive_ratio": self.label_counts[(task, lang)].positive_ratio,
                }
                for (t, lang) in sorted(self.label_counts)
                if t is task
            }
            out["tasks"][task.value] = {
                "languages": langs,
                "splits": rows,
                "label_balance": balance,
            }
        return out


def compute_stats(records: Iterable[RelevanceRecord], split_name: str) -> CorpusStats:
    """Count records per (task, split, language) and label balance per (task, language)."""
    stats = CorpusStats()
    for rec in records:
        key = (rec.task, split_name, rec.language)
        stats.split_counts[key] = stats.split_counts.get(key, 0) + 1
        cell = stats.label_counts.setdefault((rec.task, rec.language), LabelCounts())
        if rec.label == 1:
            cell.positive += 1
        else:
            cell.negative += 1
    return stats


def format_stats_table(stats: CorpusStats) -> str:
    """Human-readable table: one row per (task, split), languages as columns."""
    lines = []
    for task in (Task.QC, Task.QI):
        langs = stats.languages(task)
        if not langs:
            continue
        header = ["task", "split"] + langs + ["total"]
        widths = [max(6, len(h)) for h in header]
        rows = []
        for split in stats.splits(task):
            cells = [str(stats.record_count(task, split, lang)) for lang in langs]
            rows.append(
                [task.value, split] + cells + [str(stats.total(task, split))]
            )
        for row in rows:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        fmt = "  ".join(f"{{:>{w}}}" for w in widths)
        lines.append(fmt.format(*header))
        for row in rows:
            lines.append(fmt.format(*row))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


@dataclass
class LoadReport:
    """What happened while reading one corpus file."""

    path: str
    total_lines: int = 0
    loaded: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)
    unknown_languages: Counter = field(default_factory=Counter)
    assigned_ids: int = 0
    dangling_source_ids: int = 0


_VALID_ORIGINS = {o.value for o in Origin}


def _parse_line(line: str, expected_task: Task | None) -> tuple[RelevanceRecord, bool]:
    """Parse one corpus line; returns (record, had_explicit_id)."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataError("line is not a JSON object")

    task_raw = obj.get("task")
    try:
        task = Task(task_raw)
    except ValueError:
        raise DataError(f"unknown task {task_raw!r}")
    if expected_task is not None and task is not expected_task:
        raise DataError(f"task {task.value!r} does not match expected {expected_task.value!r}")

    query = obj.get("query")
    candidate = obj.get("candidate")
    if not isinstance(query, str) or not query.strip():
        raise DataError("missing or empty query")
    if not isinstance(candidate, str) or not candidate.strip():
        raise DataError("missing or empty candidate")

    language = obj.get("language")
    if not isinstance(language, str) or not language.strip():
        raise DataError("missing or empty language")

    label = obj.get("label")
    if label not in (0, 1) or isinstance(label, bool):
        raise DataError(f"label must be 0 or 1, got {label!r}")

    origin_raw = obj.get("origin", Origin.ORIGINAL.value)
    if origin_raw not in _VALID_ORIGINS:
        raise DataError(f"unknown origin {origin_raw!r}")
    origin = Origin(origin_raw)

    source_id = obj.get("source_id")
    if source_id is not None and not isinstance(source_id, str):
        raise DataError(f"source_id must be a string, got {source_id!r}")

    explicit_id = obj.get("id")
    if explicit_id is not None and not isinstance(explicit_id, str):
        raise DataError(f"id must be a string, got {explicit_id!r}")

    record = make_record(
        task=task,
        query=query,
        language=language,
        candidate=candidate,
        label=label,
        origin=origin,
        source_id=source_id,
        id=explicit_id,
    )
    return record, explicit_id is not None


def load_corpus(
    path: str | Path,
    task: Task | None = None,
    strict: bool = True,
) -> tuple[list[RelevanceRecord], LoadReport]:
    """Read a line-delimited corpus file.

    In strict mode the first malformed line aborts with its line number; in
    lenient mode malformed lines are skipped and counted in the report.
    """
    path = Path(path)
    report = LoadReport(path=str(path))
    records: list[RelevanceRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            report.total_lines += 1
            try:
                record, had_id = _parse_line(line, task)
            except DataError as exc:
                if strict:
                    raise DataError(f"{path}:{line_no}: {exc}") from exc
                report.skipped.append((line_no, str(exc)))
                continue
            if not had_id:
                report.assigned_ids += 1
            if record.language not in ISO_639_1:
                report.unknown_languages[record.language] += 1
            records.append(record)
            report.loaded += 1

    known_ids = {rec.id for rec in records}
    report.dangling_source_ids = sum(
        1 for rec in records if rec.source_id is not None and rec.source_id not in known_ids
    )
    return records, report


def record_to_json(rec: RelevanceRecord) -> dict:
    obj = {
        "id": rec.id,
        "task": rec.task.value,
        "query": rec.query,
        "language": rec.language,
        "candidate": rec.candidate,
        "label": rec.label,
        "origin": rec.origin.value,
    }
    if rec.source_id is not None:
        obj["source_id"] = rec.source_id
    return obj


def save_corpus(records: Iterable[RelevanceRecord], path: str | Path) -> int:
    """Write records as one JSON object per line; returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False) + "\n")
            count += 1
    return count


def dedup(records: Iterable[RelevanceRecord]) -> list[RelevanceRecord]:
    """Keep the first occurrence per (task, query, candidate, label); order stable.

    The same pair carrying both labels is NOT collapsed here: resolving label
    conflicts is the filtering stage's job, not dedup's.
    """
    seen: set[tuple[str, str, str, int]] = set()
    out: list[RelevanceRecord] = []
    for rec in records:
        key = rec.content_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(rec)
    return out


def label_conflicts(records: Iterable[RelevanceRecord]) -> list[tuple[str, str, str]]:
    """(task, query, candidate) triples that appear with both labels, first-seen order."""
    labels_by_pair: dict[tuple[str, str, str], set[int]] = {}
    order: list[tuple[str, str, str]] = []
    for rec in records:
        pair = (rec.task.value, rec.query, rec.candidate)
        if pair not in labels_by_pair:
            labels_by_pair[pair] = set()
            order.append(pair)
        labels_by_pair[pair].add(rec.label)
    return [pair for pair in order if len(labels_by_pair[pair]) == 2]


OUTPUT_YES = "yes"
OUTPUT_NO = "no"

_REQUIRED_PLACEHOLDERS = {"query", "candidate", "language"}


@dataclass(frozen=True)
class InstructionTemplate:
    """Instruction-tuning template; the output role is the fixed yes/no mapping.

    ``instruction`` and ``input`` are format strings whose placeholders, taken
    together, must cover {query}, {candidate} and {language}.
    """

    instruction: str
    input: str

    def placeholders(self) -> set[str]:
        names = set()
        for template in (self.instruction, self.input):
            for _, name, _, _ in Formatter().parse(template):
                if name:
                    names.add(name)
        return names

    def validate(self) -> None:
        names = self.placeholders()
        missing = _REQUIRED_PLACEHOLDERS - names
        if missing:
            raise ConfigError(f"template is missing placeholders: {sorted(missing)}")
        unknown = names - _REQUIRED_PLACEHOLDERS
        if unknown:
            raise ConfigError(f"template has unknown placeholders: {sorted(unknown)}")

    def render(self, rec: RelevanceRecord) -> dict:
        fields = {
            "query": rec.query,
            "candidate": rec.candidate,
            "language": rec.language,
        }
        return {
            "instruction": self.instruction.format(**fields),
            "input": self.input.format(**fields),
            "output": OUTPUT_YES if rec.label == 1 else OUTPUT_NO,
        }


def default_template(task: Task) -> InstructionTemplate:
    if task is Task.QC:
        return InstructionTemplate(
            instruction=(
                "Decide whether the user's search query is relevant to the"
                " product category path. Answer yes or no."
            ),
            input="Query ({language}): {query}\nCategory path: {candidate}",
        )
    return InstructionTemplate(
        instruction=(
            "Decide whether the user's search query is relevant to the"
            " product item title. Answer yes or no."
        ),
        input="Query ({language}): {query}\nItem title: {candidate}",
    )


def emit_training_file(
    records: Iterable[RelevanceRecord],
    template: InstructionTemplate,
    path: str | Path,
) -> int:
    """Write one instruction record per relevance record; returns the count."""
    template.validate()
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(template.render(rec), ensure_ascii=False) + "\n")
            count += 1
    return count
