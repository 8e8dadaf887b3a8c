"""Figure rendering for reports.

Matplotlib is imported lazily and forced onto the Agg backend so rendering
works headless; every function writes a PNG file and returns its path.
"""

from __future__ import annotations

import os
from collections.abc import Sequence

from .corpus import CorpusStats
from .evalreport import EvalReport
from .scoring import CalibrationResult


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_sweep_curve(result: CalibrationResult, out_path: str) -> str:
    """Threshold sweep curve with the selected threshold marked."""
    plt = _pyplot()
    thresholds = [point[0] for point in result.sweep]
    scores = [point[1] for point in result.sweep]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(thresholds, scores, marker=".", linewidth=1.2, color="#1f6fb2")
    ax.axvline(
        result.best_threshold,
        color="#c0392b",
        linestyle="--",
        linewidth=1.0,
        label=f"best {result.best_threshold:g} (F1 {result.best_f1:.4f})",
    )
    ax.set_xlabel("decision threshold")
    ax.set_ylabel("positive-class F1")
    ax.set_title(f"{result.task.value.upper()} threshold sweep")
    ax.set_xlim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower center")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_language_f1(report: EvalReport, out_path: str) -> str:
    """Grouped horizontal bars of per-language F1 for each task."""
    plt = _pyplot()
    tasks = sorted(report.tasks, key=lambda t: t.value)
    rows: list[tuple[str, float, str]] = []
    for task in tasks:
        for language, lang_eval in sorted(report.tasks[task].per_language.items()):
            rows.append((f"{task.value}:{language}", lang_eval.metrics.f1, task.value))
    fig_height = max(3.0, 0.32 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(6.4, fig_height))
    labels = [row[0] for row in rows]
    values = [row[1] for row in rows]
    colors = ["#1f6fb2" if row[2] == "qc" else "#27ae60" for row in rows]
    positions = range(len(rows))
    ax.barh(positions, values, color=colors)
    ax.set_yticks(list(positions))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("positive-class F1")
    ax.set_title("F1 by task and language")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_stats_bars(stats: CorpusStats, out_path: str) -> str:
    """Record counts per (task, split, language) as horizontal bars."""
    plt = _pyplot()
    items = sorted(
        stats.split_counts.items(),
        key=lambda kv: (kv[0][0].value, kv[0][1], kv[0][2]),
    )
    labels = [f"{task.value}/{split}/{lang}" for (task, split, lang), _ in items]
    values = [count for _, count in items]
    fig_height = max(3.0, 0.28 * len(items) + 1.2)
    fig, ax = plt.subplots(figsize=(6.4, fig_height))
    positions = range(len(items))
    ax.barh(positions, values, color="#1f6fb2")
    ax.set_yticks(list(positions))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("records")
    ax.set_title("corpus composition")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_ablation_bars(
    rows: Sequence[tuple[str, float]], out_path: str, title: str = "ablation"
) -> str:
    """One bar per configuration; ``rows`` holds (name, average F1) pairs."""
    plt = _pyplot()
    fig_height = max(2.5, 0.4 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(6.4, fig_height))
    positions = range(len(rows))
    ax.barh(positions, [value for _, value in rows], color="#8e5db2")
    ax.set_yticks(list(positions))
    ax.set_yticklabels([name for name, _ in rows], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("average F1")
    ax.set_title(title)
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
