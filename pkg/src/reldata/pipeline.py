"""End-to-end orchestration: ingest through evaluation, with a run manifest.

A run executes a fixed stage order; disabled stages are recorded as skipped
so every manifest has the same shape.  The manifest carries sha256 hashes of
every artifact read or written and no timestamps, so rerunning a config over
the same inputs produces byte-identical artifacts and manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import augment as aug
from . import negmine
from .corpus import (
    RelevanceRecord,
    Task,
    compute_stats,
    dedup,
    default_template,
    emit_training_file,
    label_conflicts,
    load_corpus,
    save_corpus,
)
from .errors import ConfigError, DataError
from .evalreport import EvalReport, EvalRow, build_report
from .hashing import file_sha256
from .providers import ProviderSettings
from .scoring import (
    calibrate_threshold,
    decide,
    save_calibration,
    save_scored,
    save_sweep_csv,
    score_records,
)
from .selfcheck import FilterAction, FilterConfig, filter_report, validate_corpus

try:  # tomllib landed in 3.11; tomli is the same parser for 3.10
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

STAGE_ORDER = (
    "ingest",
    "augment",
    "mine_negatives",
    "emit_train",
    "filter",
    "emit_train_filtered",
    "score_dev",
    "calibrate",
    "evaluate",
)


@dataclass(frozen=True)
class PipelineConfig:
    task: Task
    train_path: str
    dev_path: str
    out_dir: str
    master_seed: int = 7
    strict: bool = True
    max_in_flight: int = 16
    figures: bool = False
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    augment_enabled: bool = True
    augment_languages: tuple[str, ...] = ()  # empty: languages the dev set has and train lacks
    augment_quota: int | None = None
    negatives_enabled: bool = True
    neg_k_min: int = 20
    neg_k_max: int = 50
    negatives_per_positive: int = 1
    filter_enabled: bool = True
    filter_threshold: float = 0.9
    filter_action: FilterAction = FilterAction.REMOVE
    grid_step: float = 0.01

    def digest(self) -> str:
        """Stable 16-hex digest of everything except the output location."""
        payload = dataclasses.asdict(self)
        payload.pop("out_dir")
        payload["task"] = self.task.value
        payload["filter_action"] = self.filter_action.value
        payload["provider"] = {
            "mode": self.provider.mode,
            "translate_url": self.provider.translate_url,
            "embed_url": self.provider.embed_url,
            "score_url": self.provider.score_url,
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_SCHEMA: dict[str, set[str]] = {
    "pipeline": {"task", "seed", "out_dir", "strict", "max_in_flight", "figures"},
    "data": {"train", "dev"},
    "provider": {"mode", "translate_url", "embed_url", "score_url", "token"},
    "augment": {"enabled", "languages", "quota"},
    "negatives": {"enabled", "k_min", "k_max", "per_positive"},
    "filter": {"enabled", "threshold", "action"},
    "calibrate": {"grid_step"},
}


def load_config(path: str | Path, out_dir: str | None = None) -> PipelineConfig:
    """Build a PipelineConfig from a TOML file; unknown keys are rejected."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc

    for section, table in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        for key in table:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    pipe = raw.get("pipeline", {})
    data = raw.get("data", {})
    if "task" not in pipe:
        raise ConfigError("config needs pipeline.task")
    if "train" not in data or "dev" not in data:
        raise ConfigError("config needs data.train and data.dev")
    try:
        task = Task(str(pipe["task"]).lower())
    except ValueError as exc:
        raise ConfigError(f"unknown task {pipe['task']!r}") from exc

    prov = raw.get("provider", {})
    provider = ProviderSettings(
        mode=prov.get("mode", "mock"),
        translate_url=prov.get("translate_url"),
        embed_url=prov.get("embed_url"),
        score_url=prov.get("score_url"),
        token=prov.get("token"),
    )
    if provider.mode not in ("mock", "http"):
        raise ConfigError(f"provider.mode must be 'mock' or 'http', got {provider.mode!r}")

    augment_t = raw.get("augment", {})
    negatives_t = raw.get("negatives", {})
    filter_t = raw.get("filter", {})
    action_name = str(filter_t.get("action", "remove")).lower()
    try:
        action = FilterAction(action_name)
    except ValueError as exc:
        raise ConfigError(f"filter.action must be 'remove' or 'flag', got {action_name!r}") from exc

    base = path.parent

    def resolve(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    return PipelineConfig(
        task=task,
        train_path=resolve(str(data["train"])),
        dev_path=resolve(str(data["dev"])),
        out_dir=out_dir if out_dir is not None else resolve(str(pipe.get("out_dir", "run"))),
        master_seed=int(pipe.get("seed", 7)),
        strict=bool(pipe.get("strict", True)),
        max_in_flight=int(pipe.get("max_in_flight", 16)),
        figures=bool(pipe.get("figures", False)),
        provider=provider,
        augment_enabled=bool(augment_t.get("enabled", True)),
        augment_languages=tuple(augment_t.get("languages", ())),
        augment_quota=int(augment_t["quota"]) if "quota" in augment_t else None,
        negatives_enabled=bool(negatives_t.get("enabled", True)),
        neg_k_min=int(negatives_t.get("k_min", 20)),
        neg_k_max=int(negatives_t.get("k_max", 50)),
        negatives_per_positive=int(negatives_t.get("per_positive", 1)),
        filter_enabled=bool(filter_t.get("enabled", True)),
        filter_threshold=float(filter_t.get("threshold", 0.9)),
        filter_action=action,
        grid_step=float(raw.get("calibrate", {}).get("grid_step", 0.01)),
    )


@dataclass
class StageResult:
    name: str
    status: str = "ok"  # "ok" | "skipped" | "failed"
    input_count: int = 0
    output_count: int = 0
    inputs: list[dict[str, str]] = field(default_factory=list)
    outputs: list[dict[str, str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunManifest:
    config_digest: str
    task: str
    seed: int
    stages: list[StageResult] = field(default_factory=list)
    conservation: dict[str, int] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    failed: bool = False
    error: str | None = None

    def stage(self, name: str) -> StageResult:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "task": self.task,
            "seed": self.seed,
            "failed": self.failed,
            "error": self.error,
            "stages": [st.to_json() for st in self.stages],
            "conservation": self.conservation,
            "metrics": self.metrics,
            "artifacts": self.artifacts,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")


def _rel(path: str | Path, out_dir: str) -> str:
    try:
        rel = os.path.relpath(path, out_dir)
    except ValueError:  # different drive on windows
        rel = str(path)
    return rel.replace(os.sep, "/")


class _Run:
    """Mutable state threaded through the stages of one pipeline run."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.out = Path(config.out_dir)
        self.work = self.out / "work"
        self.manifest = RunManifest(
            config_digest=config.digest(), task=config.task.value, seed=config.master_seed
        )
        self.records: list[RelevanceRecord] = []
        self.scored = []
        self.calibration = None
        self.ledger = {"input": 0, "augmented": 0, "negatives": 0, "filtered": 0, "deduped": 0}

    def file_ref(self, path: str | Path) -> dict[str, str]:
        return {"path": _rel(path, str(self.out)), "sha256": file_sha256(path)}

    def write_working(self, stage: StageResult, filename: str) -> None:
        path = self.work / filename
        save_corpus(self.records, path)
        stage.outputs.append(self.file_ref(path))
        stage.output_count = len(self.records)

    def absorb(self, new_records: list[RelevanceRecord]) -> int:
        """Append records, re-dedup, and charge any collisions to the ledger.

        Returns the full size of the incoming batch; collisions are accounted
        under 'deduped', never netted out of the stage's own count.
        """
        before = len(self.records)
        merged = dedup(self.records + new_records)
        dropped = before + len(new_records) - len(merged)
        self.records = merged
        self.ledger["deduped"] += dropped
        return len(new_records)


def run(config: PipelineConfig) -> RunManifest:
    """Execute the pipeline; the manifest is saved even when a stage fails."""
    state = _Run(config)
    os.makedirs(state.work, exist_ok=True)
    manifest = state.manifest
    try:
        for name in STAGE_ORDER:
            stage = StageResult(name=name)
            manifest.stages.append(stage)
            _STAGES[name](state, stage)
    except Exception as exc:
        manifest.failed = True
        manifest.error = f"{type(exc).__name__}: {exc}"
        if manifest.stages:
            manifest.stages[-1].status = "failed"
        manifest.save(state.out / "manifest.json")
        raise
    manifest.conservation = _close_ledger(state)
    manifest.save(state.out / "manifest.json")
    manifest.artifacts["manifest"] = "manifest.json"
    return manifest


def _close_ledger(state: _Run) -> dict[str, int]:
    ledger = dict(state.ledger)
    ledger["output"] = len(state.records)
    expected = (
        ledger["input"]
        + ledger["augmented"]
        + ledger["negatives"]
        - ledger["filtered"]
        - ledger["deduped"]
    )
    if ledger["output"] != expected:
        raise DataError(
            f"record conservation violated: have {ledger['output']}, expected {expected} "
            f"from {ledger}"
        )
    return ledger


def _stage_ingest(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    records, report = load_corpus(cfg.train_path, task=cfg.task, strict=cfg.strict)
    stage.inputs.append(state.file_ref(cfg.train_path))
    stage.input_count = report.total_lines
    if report.skipped:
        stage.notes.append(f"skipped {len(report.skipped)} malformed lines")
    if report.unknown_languages:
        stage.notes.append(
            "unrecognized language codes: "
            + ", ".join(sorted(report.unknown_languages))
        )
    state.ledger["input"] = len(records)
    state.absorb(records)
    dropped = state.ledger["deduped"]
    if dropped:
        stage.notes.append(f"dropped {dropped} exact duplicates")
    conflicts = label_conflicts(state.records)
    if conflicts:
        stage.notes.append(f"{len(conflicts)} query/candidate pairs carry both labels")
    state.write_working(stage, "train_ingested.jsonl")


def _stage_augment(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    if not cfg.augment_enabled:
        stage.status = "skipped"
        return
    stage.input_count = len(state.records)
    train_stats = compute_stats(state.records, "train")
    if cfg.augment_languages:
        targets = set(cfg.augment_languages)
    else:
        dev_records, _ = load_corpus(cfg.dev_path, task=cfg.task, strict=cfg.strict)
        targets = aug.missing_languages(
            train_stats, {rec.language for rec in dev_records}, cfg.task
        )
    if not targets:
        stage.status = "skipped"
        stage.notes.append("no target languages to augment")
        return
    quota = cfg.augment_quota or aug.default_quota(train_stats, cfg.task)
    plan = aug.AugmentPlan(
        task=cfg.task,
        target_languages=frozenset(targets),
        per_language_quota=quota,
        master_seed=cfg.master_seed,
    )
    translated, report = aug.augment_by_translation(
        state.records, plan, cfg.provider.translator(), max_in_flight=cfg.max_in_flight
    )
    state.ledger["augmented"] = state.absorb(translated)
    stage.notes.extend(report.warnings)
    if report.failed:
        stage.notes.append(f"{report.failed} translations failed")
    stage.notes.append(
        f"targets: {', '.join(sorted(targets))}; quota {quota} per language"
    )
    state.write_working(stage, "train_augmented.jsonl")


def _stage_mine_negatives(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    if not cfg.negatives_enabled:
        stage.status = "skipped"
        return
    stage.input_count = len(state.records)
    catalog = negmine.CandidateCatalog.from_records(state.records, cfg.task)
    if len(catalog) < 2:
        stage.status = "skipped"
        stage.notes.append("catalog too small to mine against")
        return
    k_max = min(cfg.neg_k_max, len(catalog) - 1)
    k_min = min(cfg.neg_k_min, k_max)
    if (k_min, k_max) != (cfg.neg_k_min, cfg.neg_k_max):
        stage.notes.append(
            f"clamped similarity window to [{k_min}, {k_max}] for a catalog of {len(catalog)}"
        )
    mine_config = negmine.NegativeMiningConfig(
        k_min=k_min,
        k_max=k_max,
        negatives_per_positive=cfg.negatives_per_positive,
        master_seed=cfg.master_seed,
    )
    index = negmine.build_index(catalog, cfg.provider.embedder())
    positives = [rec for rec in state.records if rec.label == 1]
    if not positives:
        stage.status = "skipped"
        stage.notes.append("no positives to mine from")
        return
    negatives, report = negmine.mine_hard_negatives(
        positives,
        catalog,
        index,
        mine_config,
        exclusion=negmine.build_exclusion_set(state.records),
        max_in_flight=cfg.max_in_flight,
    )
    state.ledger["negatives"] = state.absorb(negatives)
    prov_path = state.work / "negative_provenance.jsonl"
    with open(prov_path, "w", encoding="utf-8") as fh:
        for prov in report.provenance:
            fh.write(json.dumps(dataclasses.asdict(prov), ensure_ascii=False) + "\n")
    stage.outputs.append(state.file_ref(prov_path))
    if report.skipped_no_candidates:
        stage.notes.append(
            f"{report.skipped_no_candidates} positives had no eligible neighbors"
        )
    state.write_working(stage, "train_with_negatives.jsonl")


def _stage_emit_train(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    stage.input_count = len(state.records)
    path = state.out / "train_instructions.jsonl"
    stage.output_count = emit_training_file(state.records, default_template(cfg.task), path)
    stage.outputs.append(state.file_ref(path))
    state.manifest.artifacts["training_file"] = _rel(path, str(state.out))


def _stage_filter(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    if not cfg.filter_enabled:
        stage.status = "skipped"
        return
    stage.input_count = len(state.records)
    filter_config = FilterConfig(
        confidence_threshold=cfg.filter_threshold, action=cfg.filter_action
    )
    kept, verdicts = validate_corpus(
        state.records, cfg.provider.scorer(), filter_config, max_in_flight=cfg.max_in_flight
    )
    report = filter_report(verdicts)
    state.ledger["filtered"] = len(state.records) - len(kept)
    state.records = kept
    report_path = state.work / "filter_report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    stage.outputs.append(state.file_ref(report_path))
    if report.unscored:
        stage.notes.append(f"{report.unscored} records could not be scored and were kept")
    if report.all_removed_warning:
        stage.notes.append("filter removed every record; threshold is likely misconfigured")
    if cfg.filter_action is FilterAction.FLAG_ONLY:
        stage.notes.append("flag-only mode: contradictions recorded, nothing removed")
    state.write_working(stage, "train_filtered.jsonl")


def _stage_emit_train_filtered(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    if not cfg.filter_enabled:
        stage.status = "skipped"
        return
    stage.input_count = len(state.records)
    path = state.out / "train_instructions_filtered.jsonl"
    stage.output_count = emit_training_file(state.records, default_template(cfg.task), path)
    stage.outputs.append(state.file_ref(path))
    state.manifest.artifacts["training_file_filtered"] = _rel(path, str(state.out))


def _stage_score_dev(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    dev_records, report = load_corpus(cfg.dev_path, task=cfg.task, strict=cfg.strict)
    stage.inputs.append(state.file_ref(cfg.dev_path))
    stage.input_count = len(dev_records)
    if not dev_records:
        raise DataError(f"dev file {cfg.dev_path} holds no usable records")
    scored, score_report = score_records(
        dev_records, cfg.provider.scorer(), max_in_flight=cfg.max_in_flight
    )
    if score_report.failed:
        stage.notes.append(f"{score_report.failed} dev records failed to score")
    path = state.work / "dev_scored.jsonl"
    save_scored(scored, path)
    stage.outputs.append(state.file_ref(path))
    stage.output_count = len(scored)
    state.scored = scored
    state.manifest.metrics["dev_scored"] = len(scored)
    state.manifest.metrics["dev_score_failures"] = score_report.failed


def _stage_calibrate(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    stage.input_count = len(state.scored)
    result = calibrate_threshold(state.scored, grid_step=cfg.grid_step)
    state.calibration = result
    cal_path = state.out / "calibration.json"
    save_calibration(result, cal_path)
    sweep_path = state.out / "sweep.csv"
    save_sweep_csv(result, sweep_path)
    stage.outputs.append(state.file_ref(cal_path))
    stage.outputs.append(state.file_ref(sweep_path))
    stage.output_count = len(result.sweep)
    state.manifest.metrics["best_threshold"] = result.best_threshold
    state.manifest.artifacts["calibration"] = "calibration.json"
    state.manifest.artifacts["sweep"] = "sweep.csv"
    if cfg.figures:
        from . import figures

        fig_dir = figures.ensure_dir(str(state.out / "figures"))
        fig_path = figures.render_sweep_curve(result, os.path.join(fig_dir, "sweep.png"))
        stage.outputs.append(state.file_ref(fig_path))


def _stage_evaluate(state: _Run, stage: StageResult) -> None:
    cfg = state.config
    stage.input_count = len(state.scored)
    threshold = state.calibration.best_threshold
    rows = []
    for rec in state.scored:
        if rec.label is None:
            raise DataError(f"dev record {rec.id} has no label")
        rows.append(
            EvalRow(
                task=rec.task,
                language=rec.language,
                label=rec.label,
                pred=decide(rec.p_yes, threshold),
            )
        )
    report = build_report(rows)
    report_path = state.out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    stage.outputs.append(state.file_ref(report_path))
    stage.output_count = len(rows)
    task_eval = report.tasks[cfg.task]
    state.manifest.metrics["f1"] = task_eval.metrics.f1
    state.manifest.metrics["precision"] = task_eval.metrics.precision
    state.manifest.metrics["recall"] = task_eval.metrics.recall
    state.manifest.artifacts["report"] = "report.json"
    if cfg.figures:
        from . import figures

        fig_dir = figures.ensure_dir(str(state.out / "figures"))
        f1_path = figures.render_language_f1(report, os.path.join(fig_dir, "language_f1.png"))
        stats_path = figures.render_stats_bars(
            compute_stats(state.records, "train"),
            os.path.join(fig_dir, "corpus_stats.png"),
        )
        stage.outputs.append(state.file_ref(f1_path))
        stage.outputs.append(state.file_ref(stats_path))


_STAGES = {
    "ingest": _stage_ingest,
    "augment": _stage_augment,
    "mine_negatives": _stage_mine_negatives,
    "emit_train": _stage_emit_train,
    "filter": _stage_filter,
    "emit_train_filtered": _stage_emit_train_filtered,
    "score_dev": _stage_score_dev,
    "calibrate": _stage_calibrate,
    "evaluate": _stage_evaluate,
}

_TOGGLE_FIELDS = {
    "augment": "augment_enabled",
    "negatives": "negatives_enabled",
    "filter": "filter_enabled",
}


def ablation_matrix(
    config: PipelineConfig, toggles: tuple[str, ...] = ("augment", "negatives", "filter")
) -> list[tuple[str, RunManifest]]:
    """Run every on/off combination of the given stages under one output root.

    Combination names are '+'-joined enabled stages ('baseline' for none);
    each run lands in <out_dir>/ablate/<name>.
    """
    for toggle in toggles:
        if toggle not in _TOGGLE_FIELDS:
            raise ConfigError(f"unknown ablation toggle {toggle!r}")
    results: list[tuple[str, RunManifest]] = []
    for bits in itertools.product((False, True), repeat=len(toggles)):
        enabled = [t for t, bit in zip(toggles, bits) if bit]
        name = "+".join(enabled) if enabled else "baseline"
        overrides: dict[str, Any] = {
            _TOGGLE_FIELDS[t]: bit for t, bit in zip(toggles, bits)
        }
        overrides["out_dir"] = os.path.join(config.out_dir, "ablate", name)
        results.append((name, run(replace(config, **overrides))))
    return results


def format_ablation_table(results: list[tuple[str, RunManifest]]) -> str:
    """Fixed-width comparison of ablation runs, best F1 first."""
    rows = sorted(results, key=lambda nr: (-nr[1].metrics.get("f1", 0.0), nr[0]))
    name_w = max(len("configuration"), max(len(name) for name, _ in rows))
    lines = [
        f"{'configuration':<{name_w}}  {'f1':>8}  {'threshold':>9}  {'train size':>10}",
    ]
    for name, manifest in rows:
        size = manifest.conservation.get("output", 0)
        lines.append(
            f"{name:<{name_w}}  {manifest.metrics.get('f1', float('nan')):>8.4f}"
            f"  {manifest.metrics.get('best_threshold', float('nan')):>9.2f}"
            f"  {size:>10}"
        )
    return "\n".join(lines)
