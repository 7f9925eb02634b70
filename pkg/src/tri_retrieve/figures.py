"""Report figures rendered next to delimited report files."""

from __future__ import annotations

from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["metric_figure", "padding_figure", "figure_path"]


def figure_path(report_path: str) -> str:
    stem = report_path.rsplit(".", 1)[0] if "." in report_path.rsplit("/", 1)[-1] else report_path
    return stem + ".png"


def metric_figure(per_query: Dict[str, float], mean: float, label: str, path: str) -> None:
    """Histogram of per-query metric values with the mean marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    values = list(per_query.values())
    ax.hist(values, bins=min(20, max(5, len(values) // 5 or 5)), color="#4878a8", edgecolor="white")
    ax.axvline(mean, color="#c44e52", linestyle="--", label=f"mean {mean:.4f}")
    ax.set_xlabel(label)
    ax.set_ylabel("queries")
    ax.set_title(f"{label} over {len(values)} queries")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def padding_figure(
    grouped_fraction: float,
    random_fraction: float,
    group_fractions: Sequence[float],
    path: str,
) -> None:
    """Grouped-vs-random padding overview plus the per-group breakdown."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    left.bar(["grouped", "random"], [grouped_fraction, random_fraction], color=["#4878a8", "#c44e52"])
    left.set_ylabel("padding fraction")
    left.set_title("scheduler vs shuffled baseline")
    right.bar(range(len(group_fractions)), group_fractions, color="#4878a8")
    right.set_xlabel("length group")
    right.set_ylabel("padding fraction")
    right.set_title("per-group padding")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
