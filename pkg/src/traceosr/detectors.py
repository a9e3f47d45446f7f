"""Unknown-workload detectors: per-class SVD subspaces plus the two baselines.

Each class detector keeps the top right-singular-vector basis V of that
class's training feature matrix; a test vector is accepted as the class when
its reconstruction error ||x - V V^T x|| stays under mu + alpha * sigma,
where mu/sigma are the mean and population standard deviation of the training
errors. The basis comes from an eigendecomposition of the Gram matrix (the
cyclic Jacobi solver): X^T X directly when F <= N, otherwise the N-side Gram
X X^T with right vectors recovered as X^T u / lambda and re-orthonormalized.

Baselines: a single pooled-SVD detector fitted on all training samples
regardless of class, and max-softmax rejection against a probability
threshold.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeMismatch, UncalibratedDetector, ZeroMatrix
from .jacobi import jacobi_eigh

logger = logging.getLogger(__name__)

DEFAULT_ENERGY = 0.999
DEFAULT_ALPHA_GRID = (1.0, 1.5, 2.0, 2.5, 3.0)

# Eigenvalues below this fraction of the largest are treated as zero when
# applying the energy rule, so round-off cannot inflate the selected rank.
_EIGENVALUE_FLOOR = 1e-12


@dataclass
class ClassDetector:
    """Subspace basis and calibration statistics for one known class."""

    label: str
    basis: np.ndarray  # F x R, orthonormal columns
    rank: int
    energy: float
    mu: float | None = None
    sigma: float | None = None

    @property
    def calibrated(self) -> bool:
        return self.mu is not None and self.sigma is not None

    def threshold(self, alpha: float) -> float:
        if not self.calibrated:
            raise UncalibratedDetector(f"detector for {self.label!r} has no mu/sigma")
        return self.mu + alpha * self.sigma


@dataclass
class NaiveDetector:
    """Single pooled subspace over all training samples, class-blind."""

    basis: np.ndarray
    rank: int
    energy: float
    mu: float
    sigma: float

    def threshold(self, alpha: float) -> float:
        return self.mu + alpha * self.sigma


def _orthonormalize(v: np.ndarray) -> np.ndarray:
    """Two-pass modified Gram-Schmidt; preserves span, restores orthonormality."""
    q = np.array(v, dtype=np.float64)
    for _ in range(2):
        for j in range(q.shape[1]):
            col = q[:, j]
            if j:
                col = col - q[:, :j] @ (q[:, :j].T @ col)
            norm = np.linalg.norm(col)
            if norm == 0.0:
                raise ZeroMatrix("degenerate basis column during orthonormalization")
            q[:, j] = col / norm
    return q


def fit_detector(x_w: np.ndarray, energy: float = DEFAULT_ENERGY, label: str = "") -> ClassDetector:
    """Fit the subspace basis for one class (uncalibrated).

    The rank is the minimal r whose leading eigenvalues of the Gram matrix
    (squared singular values) exceed ``energy`` times their total, capped at
    min(N, F).
    """
    x = np.ascontiguousarray(x_w, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {x.shape}")
    if x.size == 0 or not np.any(x):
        raise ZeroMatrix("cannot fit a detector on an all-zero matrix")
    if not 0.0 < energy < 1.0:
        raise ValueError("energy must be in (0, 1)")
    n, f = x.shape
    kmax = min(n, f)

    f_side = f <= n
    gram = x.T @ x if f_side else x @ x.T
    eigvals, eigvecs = jacobi_eigh(gram)
    eigvals = np.maximum(eigvals, 0.0)
    if eigvals[0] > 0.0:
        eigvals[eigvals < _EIGENVALUE_FLOOR * eigvals[0]] = 0.0
    eigvals = eigvals[:kmax]
    eigvecs = eigvecs[:, :kmax]

    total = float(eigvals.sum())
    if total == 0.0:
        raise ZeroMatrix("Gram matrix has no positive eigenvalues")
    cum = np.cumsum(eigvals)
    rank = int(np.searchsorted(cum, energy * total, side="right")) + 1
    rank = max(1, min(rank, kmax))

    if f_side:
        basis = eigvecs[:, :rank].copy()
    else:
        lam = np.sqrt(eigvals[:rank])
        basis = _orthonormalize((x.T @ eigvecs[:, :rank]) / lam)
    return ClassDetector(label=label, basis=basis, rank=rank, energy=energy)


def recon_error(v: np.ndarray, x: np.ndarray) -> float:
    """||x - V (V^T x)||_2 via two mat-vec products (no F x F projector)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"vector shape {x.shape} incompatible with basis {v.shape}")
    residual = x - v @ (v.T @ x)
    return float(np.linalg.norm(residual))


def recon_errors(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise reconstruction errors for a sample matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != v.shape[0]:
        raise ShapeMismatch(f"matrix width {x.shape[1]} != basis height {v.shape[0]}")
    residual = x - (x @ v) @ v.T
    return np.linalg.norm(residual, axis=1)


def calibrate(detector: ClassDetector, x_w: np.ndarray) -> ClassDetector:
    """Attach mu/sigma of the training reconstruction errors (population sigma)."""
    errs = recon_errors(detector.basis, x_w)
    return dataclasses.replace(detector, mu=float(errs.mean()), sigma=float(errs.std()))


def decide(detector: ClassDetector, x: np.ndarray, alpha: float) -> bool:
    """True when x is accepted as the detector's class (strict inequality)."""
    return recon_error(detector.basis, x) < detector.threshold(alpha)


@dataclass
class DetectorBank:
    """One calibrated detector per known class."""

    detectors: dict[str, ClassDetector]
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.detectors)

    @property
    def feature_size(self) -> int:
        first = next(iter(self.detectors.values()))
        return first.basis.shape[0]

    def decide(self, x: np.ndarray, label: str, alpha: float) -> bool:
        return decide(self.detectors[label], x, alpha)


def fit_detector_bank(
    x_train: np.ndarray,
    labels: Sequence[str],
    energy: float = DEFAULT_ENERGY,
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID,
) -> DetectorBank:
    """Fit and calibrate one detector per class present in ``labels``."""
    x_train = np.asarray(x_train, dtype=np.float64)
    labels = np.asarray(labels)
    detectors: dict[str, ClassDetector] = {}
    for label in sorted(set(labels.tolist())):
        rows = x_train[labels == label]
        det = fit_detector(rows, energy=energy, label=label)
        detectors[label] = calibrate(det, rows)
        logger.info(
            "detector %-16s N=%d rank=%d mu=%.4f sigma=%.4f",
            label, rows.shape[0], det.rank, detectors[label].mu, detectors[label].sigma,
        )
    return DetectorBank(detectors=detectors, alpha_grid=tuple(alpha_grid))


def fit_naive_detector(x_train: np.ndarray, energy: float = DEFAULT_ENERGY) -> NaiveDetector:
    """Single pooled detector over all training samples, calibrated on them."""
    det = fit_detector(np.asarray(x_train, dtype=np.float64), energy=energy, label="__pooled__")
    errs = recon_errors(det.basis, x_train)
    return NaiveDetector(
        basis=det.basis,
        rank=det.rank,
        energy=energy,
        mu=float(errs.mean()),
        sigma=float(errs.std()),
    )


def decide_naive(detector: NaiveDetector, x: np.ndarray, alpha: float) -> bool:
    return recon_error(detector.basis, x) < detector.threshold(alpha)


def naive_rejection(probs: np.ndarray, threshold: float) -> bool:
    """Max-softmax rejection: True (Known) iff max probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    return not float(np.max(probs)) < threshold
