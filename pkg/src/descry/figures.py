"""Matplotlib renderings of the benchmark report: per-difficulty bars and the
per-sequence series, written as PNG files next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport

_BAR_COLOR = "#3b6ea5"
_LINE_COLOR = "#a53b3b"


def plot_difficulty_bars(report: EvalReport, metric: str, path) -> Path:
    """Bar chart of one metric (``average_iou`` or ``percent_over``) broken
    down by sequence difficulty."""
    labels = [g.difficulty for g in report.difficulty_groups]
    values = [getattr(g, metric) for g in report.difficulty_groups]
    titles = {"average_iou": "Average IoU by difficulty",
              "percent_over": "%w IoU>0.4 by difficulty"}
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, values, color=_BAR_COLOR)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_title(titles.get(metric, metric))
    for x, v in enumerate(values):
        ax.text(x, v + 0.02, f"{v:.3f}", ha="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_per_sequence(report: EvalReport, path) -> Path:
    """Per-sequence average IoU series with the dataset mean marked."""
    ids = [s.sequence_id for s in report.summaries]
    values = [s.average_iou for s in report.summaries]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(ids)), 4))
    ax.bar(range(len(ids)), values, color=_BAR_COLOR)
    ax.axhline(report.dataset_average_iou, color=_LINE_COLOR, linewidth=1.2,
               label=f"dataset mean {report.dataset_average_iou:.3f}")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=75, fontsize=7)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("Average IoU")
    ax.set_title("Per-sequence performance")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_report_figures(report: EvalReport, outdir) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if report.difficulty_groups:
        written.append(plot_difficulty_bars(
            report, "average_iou", outdir / "difficulty_average_iou.png"))
        written.append(plot_difficulty_bars(
            report, "percent_over", outdir / "difficulty_percent_over.png"))
    written.append(plot_per_sequence(report, outdir / "per_sequence_iou.png"))
    return written
