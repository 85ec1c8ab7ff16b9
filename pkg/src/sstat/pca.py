"""Principal components of small dense covariance/correlation matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .analysis import correlation, covariance, exclude_columns, resolve_exclusions
from .errors import CancellationError, SstatError
from .suffstats import SuffStats

JACOBI_TOL = 1e-12
MAX_SWEEPS = 100


class Basis(str, Enum):
    COVARIANCE = "covariance"
    CORRELATION = "correlation"


class ConvergenceError(SstatError):
    pass


def _off_norm(A: np.ndarray) -> float:
    off = A[~np.eye(A.shape[0], dtype=bool)]
    return float(np.sqrt(np.dot(off, off)))


def jacobi_eigh(M: np.ndarray, tol: float = JACOBI_TOL,
                max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray, int]:
    """Cyclic Jacobi eigenvalue iteration.

    Returns unsorted eigenvalues, the matrix of eigenvectors (as columns) and
    the number of sweeps used. Sweeps stop once the off-diagonal Frobenius
    norm drops below ``tol * ||M||_F``.
    """
    A = np.array(M, dtype=np.float64)
    n = A.shape[0]
    A = (A + A.T) / 2
    V = np.eye(n)
    scale = float(np.linalg.norm(A))
    if n == 1 or scale == 0.0:
        return np.diag(A).copy(), V, 0
    for sweep in range(max_sweeps + 1):
        if _off_norm(A) <= tol * scale:
            return np.diag(A).copy(), V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def eigh_symmetric(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Ties keep their original index order. Each eigenvector is signed so that
    its largest-magnitude entry is positive.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    values, vectors, _ = jacobi_eigh(M)
    order = sorted(range(values.size), key=lambda i: -values[i])
    values = values[order]
    vectors = vectors[:, order]
    for i in range(vectors.shape[1]):
        if vectors[np.argmax(np.abs(vectors[:, i])), i] < 0:
            vectors[:, i] = -vectors[:, i]
    return values, vectors


@dataclass(frozen=True, eq=False)
class PcaResult:
    basis: Basis
    column_names: tuple[str, ...]
    included_columns: tuple[int, ...]
    eigenvalues: np.ndarray
    variance_percent: np.ndarray
    cumulative_percent: np.ndarray
    loadings: np.ndarray  # column i is the unit eigenvector of eigenvalue i
    negative_variance_columns: tuple[int, ...] = ()

    def identical(self, other: "PcaResult") -> bool:
        return (self.basis == other.basis
                and all(np.array_equal(a, b) for a, b in zip(
                    (self.eigenvalues, self.variance_percent, self.cumulative_percent, self.loadings),
                    (other.eigenvalues, other.variance_percent, other.cumulative_percent,
                     other.loadings))))


def pca_from_matrix(M: np.ndarray, basis: Basis, names: tuple[str, ...],
                    included: tuple[int, ...], negative: tuple[int, ...] = ()) -> PcaResult:
    values, vectors = eigh_symmetric(M)
    pct = values / values.sum() * 100.0
    return PcaResult(Basis(basis), names, included, values, pct, np.cumsum(pct), vectors, negative)


def run_pca(ss: SuffStats, basis: Basis = Basis.CORRELATION,
            exclusions: Optional[Iterable[int]] = None, *, ddof: int = 1,
            include_identifier: bool = False) -> PcaResult:
    """PCA from sufficient statistics only.

    A correlation basis raises :class:`~sstat.errors.CancellationError` on
    non-positive variances. A covariance basis is decomposed anyway and the
    offending columns are recorded in ``negative_variance_columns``.
    """
    basis = Basis(basis)
    drop = resolve_exclusions(ss, exclusions, include_identifier)
    kept = exclude_columns(ss, drop)
    included = tuple(j for j in range(ss.p) if j not in drop)
    cov = covariance(kept, ddof)
    names = kept.schema.column_names
    negative = tuple(included[j] for j in cov.diagnostics.negative_variance_columns)
    if basis is Basis.CORRELATION:
        try:
            M = correlation(cov.matrix, names)
        except CancellationError as exc:
            exc.columns = [included[j] for j in exc.columns]
            raise
    else:
        M = cov.matrix
    return pca_from_matrix(M, basis, names, included, negative)


def format_pca_table(res: PcaResult) -> str:
    """Text report: one line per component, then loadings with components as rows."""
    lines = [f"PCA Results (basis: {res.basis.value}; columns: {', '.join(res.column_names)})"]
    for i, (ev, pct, cum) in enumerate(zip(res.eigenvalues, res.variance_percent,
                                           res.cumulative_percent), start=1):
        lines.append(f"PC{i}: Eigenvalue = {ev:.7f}\tVariance % = {pct:.5f}\t"
                     f"Cumulative % = {cum:.5f}")
    lines.append("(Cumulative % is a running sum added by this tool.)")
    if res.negative_variance_columns:
        lines.append("WARNING: non-positive variance in column(s) "
                     + ", ".join(map(str, res.negative_variance_columns)))
    lines.append("")
    lines.append("Loadings (rows = PCs):")
    for i in range(res.loadings.shape[1]):
        lines.append(f"PC{i + 1}:\t" + "\t".join(f"{v:.6f}" for v in res.loadings[:, i]))
    return "\n".join(lines) + "\n"
