"""Command-line surface for the relevance data toolkit.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 provider failure.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from pathlib import Path

import click

from . import augment as aug
from . import negmine, pipeline
from .corpus import (
    Task,
    compute_stats,
    default_template,
    emit_training_file,
    format_stats_table,
    load_corpus,
    save_corpus,
)
from .errors import ConfigError, DataError, ProviderError
from .evalreport import EvalRow, build_report, display_metric
from .providers import ProviderSettings
from .scoring import (
    calibrate_exact,
    calibrate_threshold,
    decide,
    load_scored,
    save_calibration,
    save_scored,
    save_sweep_csv,
    score_records,
)
from .selfcheck import FilterAction, FilterConfig, filter_report, validate_corpus


def _settings(provider: str) -> ProviderSettings:
    if provider == "mock":
        return ProviderSettings(mode="mock")
    return ProviderSettings.from_env(mode="http")


def _task_option(required: bool = True):
    return click.option(
        "--task",
        "task_name",
        type=click.Choice([t.value for t in Task]),
        required=required,
        help="Which relevance task the records belong to.",
    )


provider_option = click.option(
    "--provider",
    type=click.Choice(["mock", "http"]),
    default="mock",
    show_default=True,
    help="Deterministic in-process mocks, or HTTP services configured via environment.",
)
seed_option = click.option(
    "--seed", type=int, default=7, show_default=True, help="Master seed for every random draw."
)
strict_option = click.option(
    "--strict/--lenient",
    "strict",
    default=True,
    show_default=True,
    help="Abort on the first malformed input line, or skip and count.",
)
json_option = click.option(
    "--json", "as_json", is_flag=True, help="Machine-readable JSON instead of a table."
)
inflight_option = click.option(
    "--max-in-flight",
    type=int,
    default=16,
    show_default=True,
    help="Concurrent provider calls.",
)
figures_option = click.option(
    "--figures", is_flag=True, help="Render PNG figures next to the written output."
)


@click.group()
@click.version_option(package_name="reldata", prog_name="reldata")
def cli() -> None:
    """Data-centric tooling for multilingual query relevance."""


@cli.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@_task_option(required=False)
@click.option("--split", "split_override", default=None, help="Split name for every input file.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for stats.json and stats.csv.")
@strict_option
@json_option
@figures_option
def stats(inputs, task_name, split_override, out_dir, strict, as_json, figures) -> None:
    """Per-task, per-split, per-language composition of corpus files.

    Each file's split name defaults to its filename stem.
    """
    task = Task(task_name) if task_name else None
    merged = None
    for input_path in inputs:
        records, _ = load_corpus(input_path, task=task, strict=strict)
        split = split_override or Path(input_path).stem
        stats_one = compute_stats(records, split)
        merged = stats_one if merged is None else merged.merge(stats_one)
    if as_json:
        click.echo(json.dumps(merged.to_json(), indent=2, sort_keys=True, ensure_ascii=False))
    else:
        click.echo(format_stats_table(merged))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "stats.json", "w", encoding="utf-8") as fh:
            json.dump(merged.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        with open(out / "stats.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "split", "language", "records"])
            for (task_key, split, lang), count in sorted(
                merged.split_counts.items(), key=lambda kv: (kv[0][0].value, kv[0][1], kv[0][2])
            ):
                writer.writerow([task_key.value, split, lang, count])
        if figures:
            from . import figures as fig

            fig.render_stats_bars(merged, str(out / "stats.png"))


@cli.command()
@_task_option()
@click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dev", "dev_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Evaluation file used to derive missing target languages.")
@click.option("--languages", default=None,
              help="Comma-separated target languages; default: languages the dev set has and train lacks.")
@click.option("--quota", type=int, default=None,
              help="Records per target language; default: mean per-language training count.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@seed_option
@provider_option
@strict_option
@inflight_option
def augment(task_name, train_path, dev_path, languages, quota, out_path, report_path,
            seed, provider, strict, max_in_flight) -> None:
    """Translate training queries into under-represented languages."""
    task = Task(task_name)
    records, _ = load_corpus(train_path, task=task, strict=strict)
    if languages:
        targets = {lang.strip() for lang in languages.split(",") if lang.strip()}
    elif dev_path:
        dev_records, _ = load_corpus(dev_path, task=task, strict=strict)
        targets = aug.missing_languages(
            compute_stats(records, "train"), {rec.language for rec in dev_records}, task
        )
    else:
        raise click.UsageError("need --languages or --dev to pick target languages")
    if not targets:
        raise DataError("no target languages: the training corpus already covers the dev set")
    plan = aug.AugmentPlan(
        task=task,
        target_languages=frozenset(targets),
        per_language_quota=quota or aug.default_quota(compute_stats(records, "train"), task),
        master_seed=seed,
    )
    translated, report = aug.augment_by_translation(
        records, plan, _settings(provider).translator(), max_in_flight=max_in_flight
    )
    save_corpus(translated, out_path)
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"wrote {len(translated)} translated records to {out_path}")
    if report_path:
        payload = {
            "per_language": {
                lang: dataclasses.asdict(lr) for lang, lr in sorted(report.per_language.items())
            },
            "warnings": report.warnings,
            "emitted": report.emitted,
            "failed": report.failed,
        }
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")


@cli.command(name="mine-negatives")
@_task_option()
@click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--k-min", type=int, default=20, show_default=True,
              help="Smallest similarity window drawn per positive.")
@click.option("--k-max", type=int, default=50, show_default=True,
              help="Largest similarity window drawn per positive.")
@click.option("--per-positive", type=int, default=1, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@seed_option
@provider_option
@strict_option
@inflight_option
def mine_negatives(task_name, train_path, out_path, k_min, k_max, per_positive,
                   report_path, seed, provider, strict, max_in_flight) -> None:
    """Mine semantically hard label-0 records from the candidate catalog."""
    task = Task(task_name)
    records, _ = load_corpus(train_path, task=task, strict=strict)
    catalog = negmine.CandidateCatalog.from_records(records, task)
    positives = [rec for rec in records if rec.label == 1]
    if not positives:
        raise DataError(f"{train_path} holds no positive records to mine from")
    settings = _settings(provider)
    config = negmine.NegativeMiningConfig(
        k_min=k_min, k_max=k_max, negatives_per_positive=per_positive, master_seed=seed
    )
    index = negmine.build_index(catalog, settings.embedder())
    negatives, report = negmine.mine_hard_negatives(
        positives,
        catalog,
        index,
        config,
        exclusion=negmine.build_exclusion_set(records),
        max_in_flight=max_in_flight,
    )
    save_corpus(negatives, out_path)
    click.echo(
        f"wrote {len(negatives)} mined negatives to {out_path}"
        f" ({report.skipped_no_candidates} positives had no eligible neighbors)"
    )
    if report_path:
        payload = {
            "requested": report.requested,
            "emitted": report.emitted,
            "skipped_no_candidates": report.skipped_no_candidates,
            "skipped_shortfall": report.skipped_shortfall,
            "collapsed": report.collapsed,
            "provenance": [dataclasses.asdict(p) for p in report.provenance],
        }
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")


@cli.command(name="filter")
@_task_option(required=False)
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", type=float, default=0.9, show_default=True,
              help="Confidence above which a disagreeing score contradicts the label.")
@click.option("--action", type=click.Choice(["remove", "flag"]), default="remove",
              show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@provider_option
@strict_option
@inflight_option
def filter_cmd(task_name, input_path, out_path, threshold, action, report_path,
               provider, strict, max_in_flight) -> None:
    """Drop (or flag) records whose label the scorer confidently contradicts."""
    task = Task(task_name) if task_name else None
    records, _ = load_corpus(input_path, task=task, strict=strict)
    config = FilterConfig(confidence_threshold=threshold, action=FilterAction(action))
    kept, verdicts = validate_corpus(
        records, _settings(provider).scorer(), config, max_in_flight=max_in_flight
    )
    report = filter_report(verdicts)
    save_corpus(kept, out_path)
    click.echo(
        f"kept {report.kept} of {report.total} records"
        f" ({report.removed} removed, {report.unscored} unscored)"
    )
    if report.all_removed_warning:
        click.echo("warning: every record was removed; check the threshold", err=True)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")


@cli.command()
@_task_option(required=False)
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@provider_option
@strict_option
@inflight_option
def score(task_name, input_path, out_path, provider, strict, max_in_flight) -> None:
    """Score records into normalized yes-probabilities."""
    task = Task(task_name) if task_name else None
    records, _ = load_corpus(input_path, task=task, strict=strict)
    if not records:
        raise DataError(f"{input_path} holds no usable records")
    scored, report = score_records(
        records, _settings(provider).scorer(), max_in_flight=max_in_flight
    )
    if report.failed and not report.scored:
        raise ProviderError(
            f"scoring failed for all {report.failed} records; provider unreachable?"
        )
    save_scored(scored, out_path)
    click.echo(f"scored {report.scored} records ({report.failed} failed) into {out_path}")


@cli.command()
@click.option("--scored", "scored_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL produced by the score command.")
@click.option("--grid-step", type=float, default=0.01, show_default=True)
@click.option("--exact", is_flag=True,
              help="Sweep the exact cut points of the score distribution instead of a grid.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for calibration.json and sweep.csv.")
@json_option
@figures_option
def calibrate(scored_path, grid_step, exact, out_dir, as_json, figures) -> None:
    """Pick the decision threshold that maximizes positive-class F1."""
    scored = load_scored(scored_path)
    result = calibrate_exact(scored) if exact else calibrate_threshold(scored, grid_step)
    if as_json:
        click.echo(json.dumps(result.to_json(), indent=2, sort_keys=True, ensure_ascii=False))
    else:
        click.echo(
            f"task {result.task.value}: best threshold {result.best_threshold:g}"
            f" (F1 {display_metric(result.best_f1)})"
        )
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_calibration(result, out / "calibration.json")
        save_sweep_csv(result, out / "sweep.csv")
        if figures:
            from . import figures as fig

            fig.render_sweep_curve(result, str(out / "sweep.png"))


@cli.command()
@click.option("--scored", "scored_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", "thresholds", type=(str, float), multiple=True,
              help="Per-task decision threshold, e.g. --threshold qc 0.4; repeatable.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for report.json.")
@json_option
@figures_option
def evaluate(scored_path, thresholds, out_dir, as_json, figures) -> None:
    """Positive-class F1 per task and language at fixed thresholds."""
    scored = load_scored(scored_path)
    if not scored:
        raise DataError(f"{scored_path} holds no scored records")
    by_task = {}
    for task_name, value in thresholds:
        try:
            by_task[Task(task_name.lower())] = value
        except ValueError as exc:
            raise click.UsageError(f"unknown task {task_name!r} in --threshold") from exc
    if not by_task:
        raise click.UsageError("need at least one --threshold TASK VALUE")
    rows = []
    for rec in scored:
        if rec.task not in by_task:
            raise DataError(
                f"scored file contains task {rec.task.value!r} but no threshold was given for it"
            )
        if rec.label is None:
            raise DataError(f"record {rec.id} has no label; cannot evaluate")
        rows.append(
            EvalRow(
                task=rec.task,
                language=rec.language,
                label=rec.label,
                pred=decide(rec.p_yes, by_task[rec.task]),
            )
        )
    report = build_report(rows)
    if as_json:
        click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False))
    else:
        for task, te in sorted(report.tasks.items(), key=lambda kv: kv[0].value):
            click.echo(
                f"task {task.value}: precision {display_metric(te.metrics.precision)}"
                f" recall {display_metric(te.metrics.recall)}"
                f" f1 {display_metric(te.metrics.f1)}"
                f" (threshold {by_task[task]:g}, n={te.counts.total})"
            )
        if report.f1_avg is not None:
            click.echo(f"average f1: {display_metric(report.f1_avg)}")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        if figures:
            from . import figures as fig

            fig.render_language_f1(report, str(out / "language_f1.png"))


@cli.command(name="emit-train")
@_task_option()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@strict_option
def emit_train(task_name, input_path, out_path, strict) -> None:
    """Render records into instruction-tuning rows with yes/no outputs."""
    task = Task(task_name)
    records, _ = load_corpus(input_path, task=task, strict=strict)
    count = emit_training_file(records, default_template(task), out_path)
    click.echo(f"wrote {count} instruction rows to {out_path}")


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Pipeline TOML file.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Overrides the output directory from the config.")
def run(config_path, out_dir) -> None:
    """Run the full pipeline and write artifacts plus a run manifest."""
    config = pipeline.load_config(config_path, out_dir=out_dir)
    manifest = pipeline.run(config)
    click.echo(f"run complete in {config.out_dir}")
    ledger = manifest.conservation
    click.echo(
        f"records: {ledger['input']} in + {ledger['augmented']} augmented"
        f" + {ledger['negatives']} negatives - {ledger['filtered']} filtered"
        f" - {ledger['deduped']} deduped = {ledger['output']}"
    )
    if "f1" in manifest.metrics:
        click.echo(
            f"dev f1 {display_metric(manifest.metrics['f1'])}"
            f" at threshold {manifest.metrics['best_threshold']:g}"
        )


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Pipeline TOML file.")
@click.option("--toggles", default="augment,negatives,filter", show_default=True,
              help="Comma-separated stages to ablate.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@figures_option
def ablate(config_path, toggles, out_dir, figures) -> None:
    """Run every on/off combination of the toggled stages and compare F1."""
    config = pipeline.load_config(config_path, out_dir=out_dir)
    names = tuple(t.strip() for t in toggles.split(",") if t.strip())
    results = pipeline.ablation_matrix(config, names)
    click.echo(pipeline.format_ablation_table(results))
    if figures:
        from . import figures as fig

        rows = [(name, manifest.metrics.get("f1", 0.0)) for name, manifest in results]
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fig.render_ablation_bars(rows, str(out / "ablation.png"))


@cli.command()
@click.option("--run-dir", "run_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Output directory of a previous run.")
def report(run_dir) -> None:
    """Summarize a finished run and render its figures."""
    run_path = Path(run_dir)
    manifest_path = run_path / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{run_dir} has no manifest.json; not a run directory")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    click.echo(f"task {manifest['task']}, seed {manifest['seed']}"
               f", config {manifest['config_digest']}")
    if manifest.get("failed"):
        click.echo(f"run FAILED: {manifest.get('error')}")
    for st in manifest["stages"]:
        click.echo(
            f"  {st['name']:<20} {st['status']:<8}"
            f" in={st['input_count']:<7} out={st['output_count']}"
        )
    metrics = manifest.get("metrics", {})
    if "f1" in metrics:
        click.echo(f"dev f1 {display_metric(metrics['f1'])}"
                   f" at threshold {metrics['best_threshold']:g}")
    from . import figures as fig
    from .scoring import load_calibration

    fig_dir = Path(fig.ensure_dir(str(run_path / "figures")))
    rendered = []
    cal_path = run_path / "calibration.json"
    if cal_path.exists():
        rendered.append(fig.render_sweep_curve(load_calibration(cal_path),
                                               str(fig_dir / "sweep.png")))
    report_path = run_path / "report.json"
    if report_path.exists():
        with open(report_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = []
        for task_name, te in sorted(payload.get("tasks", {}).items()):
            for lang, le in sorted(te.get("per_language", {}).items()):
                rows.append((f"{task_name}:{lang}", le["f1"]))
        if rows:
            rendered.append(_render_language_bars(rows, str(fig_dir / "language_f1.png")))
    for path in rendered:
        click.echo(f"figure: {path}")


def _render_language_bars(rows: list[tuple[str, float]], out_path: str) -> str:
    from . import figures as fig

    return fig.render_ablation_bars(rows, out_path, title="F1 by task and language")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except (DataError, ConfigError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ProviderError as exc:
        click.echo(f"provider error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
