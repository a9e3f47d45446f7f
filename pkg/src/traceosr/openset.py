"""End-to-end open-set inference and metrics.

Per test sample: standardize (when enabled) -> predict a known class with the
MLP -> accept or reject via the predicted class's detector threshold
mu + alpha * sigma. A known-class sample counts as correct only when it is
both accepted and correctly labeled. Unknown is the positive class for
recall/precision/F1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detectors import DetectorBank, NaiveDetector, recon_errors
from .errors import UncalibratedDetector
from .features import Standardizer
from .mlp import MlpModel


@dataclass
class DecisionLog:
    """Per-sample record of what the pipeline decided."""

    true_labels: list[str]
    pred_labels: list[str]
    errors: np.ndarray  # reconstruction error (or max-softmax for the rejection baseline)
    thresholds: np.ndarray
    accepted: np.ndarray  # bool: accepted as the predicted known class


@dataclass
class OpenSetReport:
    known_acc: float
    unk_recall: float
    unk_precision: float
    unk_f1: float
    n_known_test: int
    n_unknown_test: int
    inference_seconds: float
    alpha: float | None = None
    softmax_threshold: float | None = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    per_class: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def _num(x):
            return None if x is None or (isinstance(x, float) and np.isnan(x)) else x

        return {
            "alpha": self.alpha,
            "softmax_threshold": self.softmax_threshold,
            "known_acc": _num(self.known_acc),
            "unk_recall": _num(self.unk_recall),
            "unk_precision": _num(self.unk_precision),
            "unk_f1": _num(self.unk_f1),
            "n_known_test": self.n_known_test,
            "n_unknown_test": self.n_unknown_test,
            "inference_seconds": self.inference_seconds,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "per_class": self.per_class,
        }


def metrics_from_decisions(
    true_labels: Sequence[str],
    pred_labels: Sequence[str],
    accepted: np.ndarray,
    known_labels: Sequence[str],
) -> dict:
    """Aggregate confusion counts and percentage metrics from a decision log."""
    known = set(known_labels)
    accepted = np.asarray(accepted, dtype=bool)
    is_known = np.array([t in known for t in true_labels], dtype=bool)
    n_known = int(is_known.sum())
    n_unknown = int((~is_known).sum())

    tp = int((~is_known & ~accepted).sum())  # unknown rejected
    fn = int((~is_known & accepted).sum())  # unknown accepted as some class
    fp = int((is_known & ~accepted).sum())  # known rejected
    tn = int((is_known & accepted).sum())

    correct = 0
    per_class: dict[str, dict[str, int]] = {}
    for t, p, a in zip(true_labels, pred_labels, accepted.tolist()):
        row = per_class.setdefault(t, {"accepted_correct": 0, "accepted_wrong": 0, "rejected": 0})
        if not a:
            row["rejected"] += 1
        elif t == p:
            row["accepted_correct"] += 1
            if t in known:
                correct += 1
        else:
            row["accepted_wrong"] += 1

    known_acc = 100.0 * correct / n_known if n_known else float("nan")
    if n_unknown == 0:
        recall = precision = f1 = float("nan")
    else:
        recall = 100.0 * tp / (tp + fn)
        precision = 100.0 * tp / (tp + fp) if (tp + fp) else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return {
        "known_acc": known_acc,
        "unk_recall": recall,
        "unk_precision": precision,
        "unk_f1": f1,
        "n_known_test": n_known,
        "n_unknown_test": n_unknown,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
        "per_class": per_class,
    }


def _prepare(x, standardizer: Standardizer | None):
    x = np.asarray(x, dtype=np.float64)
    if standardizer is not None:
        x = standardizer.apply(x)
    return x


def _predict_and_errors(
    x: np.ndarray, model: MlpModel, bank: DetectorBank
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched predict + per-sample reconstruction error against the predicted class."""
    missing = set(model.classes) - set(bank.detectors)
    if missing:
        raise UncalibratedDetector(f"no detector for predicted classes: {sorted(missing)}")
    pred_idx, _ = model.predict_batch(x)
    errors = np.empty(x.shape[0])
    mu = np.empty(x.shape[0])
    sigma = np.empty(x.shape[0])
    for ci, label in enumerate(model.classes):
        rows = np.flatnonzero(pred_idx == ci)
        if rows.size == 0:
            continue
        det = bank.detectors[label]
        errors[rows] = recon_errors(det.basis, x[rows])
        mu[rows] = det.threshold(0.0)
        sigma[rows] = det.sigma
    return pred_idx, errors, mu, sigma


def run_openset(
    x_test: np.ndarray,
    true_labels: Sequence[str],
    model: MlpModel,
    bank: DetectorBank,
    alpha: float,
    standardizer: Standardizer | None = None,
    timing: bool = True,
) -> tuple[OpenSetReport, DecisionLog]:
    """Per-class detector pipeline at one alpha."""
    start = time.perf_counter()
    x = _prepare(x_test, standardizer)
    pred_idx, errors, mu, sigma = _predict_and_errors(x, model, bank)
    thresholds = mu + alpha * sigma
    accepted = errors < thresholds
    elapsed = time.perf_counter() - start if timing else 0.0

    pred_labels = [model.classes[i] for i in pred_idx]
    stats = metrics_from_decisions(true_labels, pred_labels, accepted, model.classes)
    report = OpenSetReport(alpha=alpha, inference_seconds=elapsed, **stats)
    log = DecisionLog(list(true_labels), pred_labels, errors, thresholds, accepted)
    return report, log


def run_naive_svd(
    x_test: np.ndarray,
    true_labels: Sequence[str],
    model: MlpModel,
    naive: NaiveDetector,
    alpha: float,
    standardizer: Standardizer | None = None,
    timing: bool = True,
) -> tuple[OpenSetReport, DecisionLog]:
    """Pooled single-SVD baseline: same classifier, one class-blind threshold."""
    start = time.perf_counter()
    x = _prepare(x_test, standardizer)
    pred_idx, _ = model.predict_batch(x)
    errors = recon_errors(naive.basis, x)
    threshold = naive.threshold(alpha)
    accepted = errors < threshold
    elapsed = time.perf_counter() - start if timing else 0.0

    pred_labels = [model.classes[i] for i in pred_idx]
    stats = metrics_from_decisions(true_labels, pred_labels, accepted, model.classes)
    report = OpenSetReport(alpha=alpha, inference_seconds=elapsed, **stats)
    log = DecisionLog(list(true_labels), pred_labels, errors, np.full(len(errors), threshold), accepted)
    return report, log


def run_softmax_rejection(
    x_test: np.ndarray,
    true_labels: Sequence[str],
    model: MlpModel,
    threshold: float,
    standardizer: Standardizer | None = None,
    timing: bool = True,
) -> tuple[OpenSetReport, DecisionLog]:
    """Max-softmax rejection baseline: Unknown iff max probability < threshold."""
    start = time.perf_counter()
    x = _prepare(x_test, standardizer)
    pred_idx, probs = model.predict_batch(x)
    top = probs.max(axis=1)
    accepted = ~(top < threshold)
    elapsed = time.perf_counter() - start if timing else 0.0

    pred_labels = [model.classes[i] for i in pred_idx]
    stats = metrics_from_decisions(true_labels, pred_labels, accepted, model.classes)
    report = OpenSetReport(softmax_threshold=threshold, inference_seconds=elapsed, **stats)
    log = DecisionLog(list(true_labels), pred_labels, top, np.full(len(top), threshold), accepted)
    return report, log
