from __future__ import annotations

import numpy as np
import pytest

from traceosr.detectors import fit_detector_bank, fit_naive_detector
from traceosr.features import fit_standardizer
from traceosr.mlp import TrainConfig, train
from traceosr.openset import (
    metrics_from_decisions,
    run_naive_svd,
    run_openset,
    run_softmax_rejection,
)


def cluster_dataset(seed=0):
    """Three tight known clusters plus one far-away unknown cluster."""
    rng = np.random.default_rng(seed)
    f = 12
    centers = {"a": 0, "b": 1, "c": 2}
    x_train, y_train = [], []
    for label, axis in centers.items():
        pts = rng.normal(size=(60, f))
        pts[:, axis] += 40
        x_train.append(pts)
        y_train += [label] * 60
    x_test, y_test = [], []
    for label, axis in centers.items():
        pts = rng.normal(size=(25, f))
        pts[:, axis] += 40
        x_test.append(pts)
        y_test += [label] * 25
    unk = rng.normal(size=(30, f))
    unk[:, 5] -= 40
    unk[:, 7] += 40
    x_test.append(unk)
    y_test += ["mystery"] * 30
    return np.vstack(x_train), y_train, np.vstack(x_test), y_test


@pytest.fixture(scope="module")
def pipeline():
    x_train, y_train, x_test, y_test = cluster_dataset()
    standardizer = fit_standardizer(x_train)
    xs = standardizer.apply(x_train)
    model, _ = train(xs, y_train, TrainConfig(learning_rate=0.05, batch_size=32, epochs=5, hidden=16, seed=0))
    bank = fit_detector_bank(xs, y_train, energy=0.99)
    naive = fit_naive_detector(xs, energy=0.99)
    return model, bank, naive, standardizer, x_test, y_test


def oracle_metrics(true_labels, pred_labels, accepted, known):
    """Independent recomputation, written sample-by-sample."""
    tp = fp = fn = tn = correct = n_known = n_unknown = 0
    for t, p, a in zip(true_labels, pred_labels, accepted):
        if t in known:
            n_known += 1
            if a:
                tn += 1
                if p == t:
                    correct += 1
            else:
                fp += 1
        else:
            n_unknown += 1
            if a:
                fn += 1
            else:
                tp += 1
    recall = 100.0 * tp / (tp + fn) if n_unknown else float("nan")
    precision = 100.0 * tp / (tp + fp) if (tp + fp) and n_unknown else (0.0 if n_unknown else float("nan"))
    f1 = 2 * precision * recall / (precision + recall) if n_unknown and (precision + recall) else (
        0.0 if n_unknown else float("nan")
    )
    return {
        "known_acc": 100.0 * correct / n_known,
        "unk_recall": recall,
        "unk_precision": precision,
        "unk_f1": f1,
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
    }


class TestRunOpenset:
    def test_report_matches_decision_log_oracle(self, pipeline):
        model, bank, _, std, x_test, y_test = pipeline
        report, log = run_openset(x_test, y_test, model, bank, alpha=3.0, standardizer=std)
        ref = oracle_metrics(log.true_labels, log.pred_labels, log.accepted.tolist(), set(model.classes))
        assert report.known_acc == pytest.approx(ref["known_acc"], abs=1e-9)
        assert report.unk_recall == pytest.approx(ref["unk_recall"], abs=1e-9)
        assert report.unk_precision == pytest.approx(ref["unk_precision"], abs=1e-9)
        assert report.unk_f1 == pytest.approx(ref["unk_f1"], abs=1e-9)
        assert (report.tp, report.fp, report.fn, report.tn) == (ref["tp"], ref["fp"], ref["fn"], ref["tn"])
        assert report.n_known_test == 75
        assert report.n_unknown_test == 30
        assert report.inference_seconds > 0

    def test_separable_clusters_solved(self, pipeline):
        model, bank, _, std, x_test, y_test = pipeline
        report, _ = run_openset(x_test, y_test, model, bank, alpha=3.0, standardizer=std)
        assert report.known_acc > 90.0
        assert report.unk_recall == 100.0

    def test_all_known_single_class(self, pipeline):
        model, bank, _, std, *_ = pipeline
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(20, 12))
        pts[:, 0] += 40
        report, _ = run_openset(pts, ["a"] * 20, model, bank, alpha=3.0, standardizer=std)
        assert report.n_unknown_test == 0
        assert np.isnan(report.unk_recall)
        assert np.isnan(report.unk_f1)
        assert report.to_dict()["unk_recall"] is None  # not-applicable in JSON

    def test_dataset_level_alpha_monotonicity(self, pipeline):
        model, bank, _, std, x_test, y_test = pipeline
        accs, recalls = [], []
        prev_accepted = None
        for alpha in (1.0, 1.5, 2.0, 2.5, 3.0):
            report, log = run_openset(x_test, y_test, model, bank, alpha, standardizer=std)
            accs.append(report.known_acc)
            recalls.append(report.unk_recall)
            accepted = set(np.flatnonzero(log.accepted).tolist())
            if prev_accepted is not None:
                assert prev_accepted <= accepted
            prev_accepted = accepted
        assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(recalls, recalls[1:]))

    def test_timing_flag(self, pipeline):
        model, bank, _, std, x_test, y_test = pipeline
        report, _ = run_openset(x_test, y_test, model, bank, 3.0, standardizer=std, timing=False)
        assert report.inference_seconds == 0.0


class TestNaiveSvdBaseline:
    def test_runs_and_counts(self, pipeline):
        model, _, naive, std, x_test, y_test = pipeline
        report, log = run_naive_svd(x_test, y_test, model, naive, alpha=3.0, standardizer=std)
        ref = oracle_metrics(log.true_labels, log.pred_labels, log.accepted.tolist(), set(model.classes))
        assert report.unk_recall == pytest.approx(ref["unk_recall"], abs=1e-9)
        assert report.alpha == 3.0


class TestSoftmaxRejection:
    def test_threshold_extremes(self, pipeline):
        model, _, _, std, x_test, y_test = pipeline
        lo, _ = run_softmax_rejection(x_test, y_test, model, 1e-9, standardizer=std)
        assert lo.unk_recall == 0.0  # nothing rejected
        hi, _ = run_softmax_rejection(x_test, y_test, model, 1 - 1e-12, standardizer=std)
        assert hi.known_acc <= lo.known_acc

    def test_sweep_traces_tradeoff(self, pipeline):
        model, _, _, std, x_test, y_test = pipeline
        recalls, accs = [], []
        for t in np.linspace(0.35, 0.999, 15):
            rep, _ = run_softmax_rejection(x_test, y_test, model, float(t), standardizer=std)
            recalls.append(rep.unk_recall)
            accs.append(rep.known_acc)
        # raising the threshold can only reject more: recall non-decreasing
        assert all(a <= b + 1e-12 for a, b in zip(recalls, recalls[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(accs, accs[1:]))


class TestMetricsEdgeCases:
    def test_precision_zero_when_nothing_rejected(self):
        stats = metrics_from_decisions(
            ["k", "u"], ["k", "k"], np.array([True, True]), ["k"]
        )
        assert stats["unk_recall"] == 0.0
        assert stats["unk_precision"] == 0.0
        assert stats["unk_f1"] == 0.0

    def test_perfect_rejection(self):
        stats = metrics_from_decisions(
            ["k", "u", "u"], ["k", "k", "k"], np.array([True, False, False]), ["k"]
        )
        assert stats["unk_recall"] == 100.0
        assert stats["unk_precision"] == 100.0
        assert stats["unk_f1"] == 100.0
        assert stats["known_acc"] == 100.0

    def test_rejected_known_sample_is_an_error(self):
        stats = metrics_from_decisions(["k"], ["k"], np.array([False]), ["k"])
        assert stats["known_acc"] == 0.0

    def test_accepted_mislabel_is_an_error(self):
        stats = metrics_from_decisions(["k", "k"], ["j", "k"], np.array([True, True]), ["k", "j"])
        assert stats["known_acc"] == 50.0
