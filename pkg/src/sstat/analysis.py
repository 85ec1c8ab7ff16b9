"""Means, covariance and correlation derived from sufficient statistics alone."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CancellationError
from .suffstats import CoMoments, SuffStats

KAPPA_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class CancellationDiagnostics:
    """Per-column cancellation severity ``kappa_j = n*mean_j**2 / S_jj``.

    kappa is the share of the raw second moment explained by the mean term.
    Near 1, ``S_jj - n*mean_j**2`` cancels most of its significant bits.
    """

    kappa: np.ndarray
    threshold: float
    flagged_columns: tuple[int, ...]
    negative_variance_columns: tuple[int, ...]


def cancellation_diagnostics(ss: SuffStats, variances: np.ndarray,
                             threshold: float = KAPPA_THRESHOLD) -> CancellationDiagnostics:
    mu = ss.s / ss.n
    diag = np.diag(ss.S)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(diag > 0, ss.n * mu * mu / diag, 0.0)
    flagged = tuple(int(j) for j in np.flatnonzero(kappa > threshold))
    negative = tuple(int(j) for j in np.flatnonzero(variances <= 0))
    return CancellationDiagnostics(kappa, threshold, flagged, negative)


def exclude_columns(ss: SuffStats, drop: Iterable[int]) -> SuffStats:
    drop = set(drop)
    bad = [j for j in drop if not 0 <= j < ss.p]
    if bad:
        raise IndexError(f"columns not in schema: {sorted(bad)}")
    keep = [j for j in range(ss.p) if j not in drop]
    if not keep:
        raise ValueError("cannot exclude every column")
    if not drop:
        return ss
    idx = np.array(keep)
    return SuffStats(ss.n, ss.s[idx].copy(), ss.S[np.ix_(idx, idx)].copy(),
                     ss.schema.select(keep), ss.precision)


def means(ss: SuffStats) -> np.ndarray:
    if ss.n == 0:
        raise ValueError("no observations")
    return ss.s / ss.n


@dataclass(frozen=True, eq=False)
class CovarianceResult:
    matrix: np.ndarray
    diagnostics: CancellationDiagnostics
    ddof: int


def covariance(ss: SuffStats, ddof: int = 1,
               threshold: float = KAPPA_THRESHOLD) -> CovarianceResult:
    """``(S - n*mu*mu^T) / (n - ddof)``. Negative variances are reported, never clamped."""
    if ddof not in (0, 1):
        raise ValueError("ddof must be 0 or 1")
    if ss.n <= ddof:
        raise ValueError(f"need n > ddof (n={ss.n}, ddof={ddof})")
    mu = means(ss)
    cov = (ss.S - ss.n * np.outer(mu, mu)) / (ss.n - ddof)
    return CovarianceResult(cov, cancellation_diagnostics(ss, np.diag(cov), threshold), ddof)


def covariance_from_comoments(cm: CoMoments, ddof: int = 1) -> np.ndarray:
    return cm.covariance(ddof)


def correlation(cov: np.ndarray, names: Optional[Sequence[str]] = None) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    var = np.diag(cov)
    bad = [int(j) for j in np.flatnonzero(~(var > 0))]
    if bad:
        raise CancellationError(bad, [names[j] for j in bad] if names is not None else None)
    with np.errstate(over="ignore"):
        denom = np.sqrt(np.outer(var, var))
    if not np.all(np.isfinite(denom)):  # product overflowed; scale first
        sd = np.sqrt(var)
        denom = np.outer(sd, sd)
    R = cov / denom
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    included_columns: tuple[int, ...]
    column_names: tuple[str, ...]
    n: int
    mean: np.ndarray
    covariance: np.ndarray
    correlation: Optional[np.ndarray]
    diagnostics: CancellationDiagnostics
    ddof: int
    correlation_error: Optional[CancellationError] = None


def resolve_exclusions(ss: SuffStats, exclude: Optional[Iterable[int]] = None,
                       include_identifier: bool = False) -> set[int]:
    """Identifier columns are dropped unless ``include_identifier`` is set."""
    drop = set(exclude or ())
    if not include_identifier:
        drop |= set(ss.schema.identifier_columns)
    return drop


def analyze(ss: SuffStats, ddof: int = 1, exclude: Optional[Iterable[int]] = None,
            include_identifier: bool = False,
            threshold: float = KAPPA_THRESHOLD) -> AnalysisResult:
    drop = resolve_exclusions(ss, exclude, include_identifier)
    kept = exclude_columns(ss, drop)
    included = tuple(j for j in range(ss.p) if j not in drop)
    cov = covariance(kept, ddof, threshold)
    names = kept.schema.column_names
    try:
        corr, err = correlation(cov.matrix, names), None
    except CancellationError as exc:
        # report columns by their index in the full schema
        exc.columns = [included[j] for j in exc.columns]
        corr, err = None, exc
    return AnalysisResult(included, names, ss.n, means(kept), cov.matrix, corr,
                          cov.diagnostics, ddof, err)
