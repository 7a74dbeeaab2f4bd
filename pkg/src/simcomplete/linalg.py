"""Dense symmetric-matrix kernels: norms, Jacobi eigendecomposition, PSD
projection, spectral thresholding, low-rank Gram factorization, and
effective rank.

Matrices are plain float64 ``numpy`` arrays. Symmetric inputs are
re-symmetrized as ``(A + A.T) / 2`` on entry so that floating-point drift
accumulated by iterative callers cannot leak into the spectral routines.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import NonConvergence


class EigenDecomposition(NamedTuple):
    """Eigenvalues in nonincreasing order with matching orthonormal columns."""

    eigenvalues: np.ndarray  # shape (n,)
    eigenvectors: np.ndarray  # shape (n, n), column i pairs with eigenvalue i


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def as_square(a, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def symmetrize(a) -> np.ndarray:
    """Return (A + A.T) / 2, absorbing round-off asymmetry."""
    m = as_square(a)
    return (m + m.T) / 2.0


def frobenius_norm(m) -> float:
    """sqrt of the sum of squared entries.

    Entries are scaled by the largest magnitude before squaring so the
    result is zero only for the zero matrix, even when squares underflow.
    """
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    amax = float(np.abs(a).max())
    if amax == 0.0:
        return 0.0
    scaled = a / amax
    return amax * float(np.sqrt(np.vdot(scaled, scaled)))


@lru_cache(maxsize=32)
def _rotation_rounds(n: int):
    """Round-robin pair schedule: every index pair (i, j), i < j, appears in
    exactly one round per sweep, and pairs within a round are disjoint so
    their Givens rotations commute and can be applied as one batch.

    Built with the circle method; a dummy index pads odd n.
    """
    m = n if n % 2 == 0 else n + 1
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _max_offdiag(a: np.ndarray) -> float:
    b = np.abs(a)
    np.fill_diagonal(b, 0.0)
    return float(b.max())


def sym_eigendecompose(s, sweep_tol: float = 1e-12, max_sweeps: int = 30) -> EigenDecomposition:
    """Jacobi eigendecomposition of a symmetric matrix.

    Batched Givens rotations are swept over all index pairs until the
    largest off-diagonal magnitude falls below ``sweep_tol`` times the
    Frobenius norm of the input.

    Parameters
    ----------
    s : array_like
        Symmetric matrix; symmetrized on entry.
    sweep_tol : float
        Relative off-diagonal tolerance, > 0.
    max_sweeps : int
        Full sweeps allowed before giving up.

    Returns
    -------
    EigenDecomposition
        Eigenvalues sorted nonincreasing (stable under ties); each
        eigenvector column has its first nonzero entry nonnegative.

    Raises
    ------
    NonConvergence
        If the tolerance is not met within ``max_sweeps`` sweeps.
    """
    if sweep_tol <= 0.0:
        raise ValueError("sweep_tol must be positive")
    a = symmetrize(s)
    n = a.shape[0]
    u = np.eye(n)
    scale = float(np.linalg.norm(a, "fro"))
    if n > 1 and scale > 0.0:
        threshold = sweep_tol * scale
        rounds = _rotation_rounds(n)
        sweeps = 0
        while _max_offdiag(a) > threshold:
            if sweeps >= max_sweeps:
                raise NonConvergence(
                    f"off-diagonal magnitude still above {threshold:.3e} "
                    f"after {max_sweeps} sweeps (n={n})"
                )
            for p, q in rounds:
                apq = a[p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                if not active.all():
                    p, q, apq = p[active], q[active], apq[active]
                app = a[p, p]
                aqq = a[q, q]
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    tau = (aqq - app) / (2.0 * apq)
                    t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                # tau == 0 takes the 45-degree rotation; |tau| = inf takes t -> 0
                t = np.where(tau == 0.0, 1.0, t)
                t = np.where(np.isfinite(tau), t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                v = t * c
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - v * cq
                a[:, q] = v * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c[:, None] * rp - v[:, None] * rq
                a[q, :] = v[:, None] * rp + c[:, None] * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                cp = u[:, p].copy()
                cq = u[:, q].copy()
                u[:, p] = c * cp - v * cq
                u[:, q] = v * cp + c * cq
            a = (a + a.T) / 2.0
            sweeps += 1
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    u = np.ascontiguousarray(u[:, order])
    # sign convention: first nonzero entry of each column made nonnegative
    for j in range(n):
        col = u[:, j]
        nz = np.nonzero(col)[0]
        if nz.size and col[nz[0]] < 0.0:
            u[:, j] = -col
    return EigenDecomposition(vals, u)


def nuclear_norm(s, sweep_tol: float = 1e-12) -> float:
    """Sum of singular values of a symmetric matrix: sum of |eigenvalues|."""
    vals, _ = sym_eigendecompose(s, sweep_tol)
    return float(np.abs(vals).sum())


def psd_project(s, sweep_tol: float = 1e-12) -> np.ndarray:
    """Euclidean projection onto the PSD cone: clamp negative eigenvalues to 0."""
    vals, u = sym_eigendecompose(s, sweep_tol)
    clamped = np.maximum(vals, 0.0)
    return symmetrize((u * clamped) @ u.T)


def soft_threshold_eigenvalues(s, amount: float, sweep_tol: float = 1e-12) -> np.ndarray:
    """Shrink every eigenvalue by ``amount`` and clamp at zero, then rebuild.

    This is the proximal operator of ``amount * nuclear_norm`` restricted to
    symmetric matrices with nonnegative spectrum after shrinkage.
    """
    if amount < 0.0:
        raise ValueError("threshold amount must be nonnegative")
    vals, u = sym_eigendecompose(s, sweep_tol)
    shrunk = np.maximum(vals - amount, 0.0)
    return symmetrize((u * shrunk) @ u.T)


def factor_from_psd(s, r: int, sweep_tol: float = 1e-12) -> np.ndarray:
    """Rank-r factor V with V @ V.T the best rank-r PSD approximation of s.

    Top-r eigenpairs are kept, negative eigenvalues clamped to zero, and
    V = U_r * sqrt(lambda_r). Column signs follow the eigensolver's
    convention, so the result is reproducible.
    """
    a = as_square(s)
    n = a.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"rank r={r} outside [1, {n}]")
    vals, u = sym_eigendecompose(a, sweep_tol)
    top = np.maximum(vals[:r], 0.0)
    return u[:, :r] * np.sqrt(top)


def effective_rank(s, threshold: float | None = None, sweep_tol: float = 1e-12) -> int:
    """Number of eigenvalues with magnitude above ``threshold``.

    When ``threshold`` is None it defaults to ``1e-15 * max(1, |lambda|_max)``.
    """
    vals, _ = sym_eigendecompose(s, sweep_tol)
    return _count_above(vals, threshold)


def gram_effective_rank(factor, threshold: float | None = None, sweep_tol: float = 1e-12) -> int:
    """Effective rank of ``F @ F.T`` computed from the small Gram ``F.T @ F``.

    The nonzero spectrum of F F^T equals that of F^T F, so the count matches
    ``effective_rank(F @ F.T)`` at a fraction of the cost when F is tall.
    """
    f = as_matrix(factor, "factor")
    vals, _ = sym_eigendecompose(f.T @ f, sweep_tol)
    return _count_above(vals, threshold)


def _count_above(vals: np.ndarray, threshold: float | None) -> int:
    mags = np.abs(vals)
    if threshold is None:
        threshold = 1e-15 * max(1.0, float(mags.max()) if mags.size else 0.0)
    elif threshold <= 0.0:
        raise ValueError("threshold must be positive")
    return int((mags > threshold).sum())
