"""Report emission: delimited tables plus rendered trade-off figures.

CSV and JSON carry identical content; NaN metrics (no unknown test samples)
appear as ``nan`` in CSV and ``null`` in JSON. Figures are PNG renders of the
same rows, written next to the tables.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .openset import OpenSetReport  # noqa: E402

REPORT_FIELDS = (
    "alpha",
    "known_acc",
    "unk_recall",
    "unk_precision",
    "unk_f1",
    "n_known_test",
    "n_unknown_test",
    "inference_seconds",
)

THRESHOLD_FIELDS = ("threshold",) + REPORT_FIELDS[1:]

_METRICS = ("known_acc", "unk_recall", "unk_precision", "unk_f1")


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(path: str | Path, reports: Sequence[OpenSetReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_FIELDS)
        for r in reports:
            writer.writerow(
                [
                    _fmt(r.alpha),
                    _fmt(r.known_acc),
                    _fmt(r.unk_recall),
                    _fmt(r.unk_precision),
                    _fmt(r.unk_f1),
                    r.n_known_test,
                    r.n_unknown_test,
                    _fmt(r.inference_seconds),
                ]
            )


def write_threshold_csv(path: str | Path, reports: Sequence[OpenSetReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(THRESHOLD_FIELDS)
        for r in reports:
            writer.writerow(
                [
                    _fmt(r.softmax_threshold),
                    _fmt(r.known_acc),
                    _fmt(r.unk_recall),
                    _fmt(r.unk_precision),
                    _fmt(r.unk_f1),
                    r.n_known_test,
                    r.n_unknown_test,
                    _fmt(r.inference_seconds),
                ]
            )


def write_report_json(path: str | Path, reports: Sequence[OpenSetReport], context: dict | None = None) -> None:
    payload = {"context": context or {}, "reports": [r.to_dict() for r in reports]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def format_table(reports: Sequence[OpenSetReport]) -> str:
    """Fixed-width summary for terminal output."""
    head = f"{'alpha':>6} {'known_acc':>10} {'unk_recall':>10} {'unk_prec':>10} {'unk_f1':>10}"
    lines = [head]
    for r in reports:
        key = r.alpha if r.alpha is not None else r.softmax_threshold
        lines.append(
            f"{key:>6.2f} {r.known_acc:>10.2f} {r.unk_recall:>10.2f} {r.unk_precision:>10.2f} {r.unk_f1:>10.2f}"
        )
    return "\n".join(lines)


def plot_alpha_tradeoff(
    path: str | Path,
    bank_reports: Sequence[OpenSetReport],
    naive_reports: Sequence[OpenSetReport] | None = None,
) -> None:
    """Each metric vs alpha; per-class bank solid, pooled baseline dashed."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    alphas = [r.alpha for r in bank_reports]
    for ax, metric in zip(axes.flat, _METRICS):
        ax.plot(alphas, [getattr(r, metric) for r in bank_reports], "o-", label="per-class SVD")
        if naive_reports:
            ax.plot(
                [r.alpha for r in naive_reports],
                [getattr(r, metric) for r in naive_reports],
                "s--",
                label="single SVD",
            )
        ax.set_ylabel(f"{metric} (%)")
        ax.grid(True, alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("alpha")
    axes[0, 0].legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_operating_curve(
    path: str | Path,
    bank_reports: Sequence[OpenSetReport],
    naive_reports: Sequence[OpenSetReport] | None = None,
    softmax_reports: Sequence[OpenSetReport] | None = None,
) -> None:
    """Unknown recall against known accuracy for every method's sweep."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(
        [r.known_acc for r in bank_reports],
        [r.unk_recall for r in bank_reports],
        "o-",
        label="per-class SVD",
    )
    if naive_reports:
        ax.plot(
            [r.known_acc for r in naive_reports],
            [r.unk_recall for r in naive_reports],
            "s--",
            label="single SVD",
        )
    if softmax_reports:
        ax.plot(
            [r.known_acc for r in softmax_reports],
            [r.unk_recall for r in softmax_reports],
            "^:",
            label="max-softmax",
        )
    ax.set_xlabel("known-class accuracy (%)")
    ax.set_ylabel("unknown recall (%)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
