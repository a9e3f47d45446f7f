"""Cyclic Jacobi eigensolver for symmetric matrices.

One sweep visits every off-diagonal pair exactly once, in round-robin
(tournament) order so each round's pairs are disjoint and their rotations can
be applied vectorized. Convergence is declared when the off-diagonal
Frobenius norm drops below ``tol`` times the matrix Frobenius norm.
"""

from __future__ import annotations

import numpy as np

from .errors import EigenFailure, ShapeMismatch


def off_norm(a: np.ndarray) -> float:
    """Frobenius norm of the off-diagonal part.

    Computed by zeroing the diagonal rather than subtracting norms, which
    would cancel catastrophically once the off-diagonal mass is tiny.
    """
    off = np.array(a, dtype=np.float64)
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _round_robin_rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairs covering all n(n-1)/2 pairs in n-1 (or n) rounds."""
    players = list(range(n))
    if n % 2:
        players.append(n)  # bye
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
    eigenvectors as the corresponding columns. Raises EigenFailure when the
    off-diagonal norm has not dropped below tol * ||A||_F after max_sweeps.
    """
    A = np.array(a, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    V = np.eye(n)
    if n < 2:
        return A.diagonal().copy(), V
    fro = float(np.linalg.norm(A))
    if fro == 0.0:
        return np.zeros(n), V

    rounds = _round_robin_rounds(n)
    # Entries at or below this magnitude are left unrotated; their combined
    # mass keeps the off-diagonal norm well under tol * fro.
    thr = 0.25 * tol * fro / n

    converged = False
    for _ in range(max_sweeps):
        if off_norm(A) <= tol * fro:
            converged = True
            break
        for p_all, q_all in rounds:
            apq = A[p_all, q_all]
            rotate = np.abs(apq) > thr
            if not rotate.any():
                continue
            p = p_all[rotate]
            q = q_all[rotate]
            apq = apq[rotate]
            app = A[p, p]
            aqq = A[q, q]
            tau = (aqq - app) / (2.0 * apq)
            sgn = np.where(tau >= 0.0, 1.0, -1.0)
            t = sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            rp = A[p, :]
            rq = A[q, :]
            A[p, :] = c[:, None] * rp - s[:, None] * rq
            A[q, :] = s[:, None] * rp + c[:, None] * rq

            cp = A[:, p]
            cq = A[:, q]
            A[:, p] = c * cp - s * cq
            A[:, q] = s * cp + c * cq
            A[p, q] = 0.0
            A[q, p] = 0.0

            vp = V[:, p]
            vq = V[:, q]
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq
        A = 0.5 * (A + A.T)
    else:
        converged = off_norm(A) <= tol * fro
    if not converged:
        raise EigenFailure(f"no convergence after {max_sweeps} sweeps (off={off_norm(A):.3e})")

    eigvals = A.diagonal().copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], V[:, order]
