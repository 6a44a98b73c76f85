"""Regression core: OLS with diagnostics, Newey-West standard errors, and
Fama-MacBeth aggregation of per-date cross-sectional fits.

Everything here is pure and deterministic. Means over dates use numpy's
pairwise summation on date-sorted arrays, so results do not depend on the
order in which callers collected the fits.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    RankDeficient,
    SeriesTooShort,
    TooFewDates,
    TooFewObservations,
)

DEFAULT_RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class OlsFit:
    """One least-squares fit.

    coefficients/residuals/stderr are plain float64 arrays; r2 is the
    unadjusted coefficient of determination (kept because nesting
    comparisons need it), adj_r2 the small-sample adjusted one.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    stderr: np.ndarray
    r2: float
    adj_r2: float
    n_obs: int
    n_params: int


def ols(
    X: Sequence | np.ndarray,
    y: Sequence | np.ndarray,
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
) -> OlsFit:
    """Least squares of y on the columns of X via singular value decomposition.

    Raises TooFewObservations unless n > p, and RankDeficient (naming the
    columns loading on the null direction) when the smallest singular value
    falls below rank_tolerance times the largest. No normal-equation
    inversion is performed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 1 and y.size != 1 and X.shape[1] == y.size:
        X = X.T
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError(f"response length {y.shape} does not match {n} rows")
    if n <= p:
        raise TooFewObservations(n, p)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in regression inputs")

    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] <= 0.0 or s[-1] <= rank_tolerance * s[0]:
        null = Vt[-1]
        cols = np.flatnonzero(np.abs(null) >= 0.1 * np.abs(null).max())
        raise RankDeficient([int(c) for c in cols])

    coef = Vt.T @ ((U.T @ y) / s)
    residuals = y - X @ coef
    ssr = float(residuals @ residuals)
    centered = y - y.mean()
    sst = float(centered @ centered)
    if sst > 0.0:
        r2 = 1.0 - ssr / sst
    else:
        # constant response: define R^2 = 1 when fitted exactly, else 0
        r2 = 1.0 if ssr <= 1e-24 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    sigma2 = ssr / (n - p)
    xtx_inv_diag = np.einsum("ki,k->i", Vt**2, s**-2.0)
    stderr = np.sqrt(sigma2 * xtx_inv_diag)
    return OlsFit(
        coefficients=coef,
        residuals=residuals,
        stderr=stderr,
        r2=float(r2),
        adj_r2=float(adj_r2),
        n_obs=n,
        n_params=p,
    )


def newey_west_lag(n_dates: int) -> int:
    """Default truncation lag: floor(4 * (T/100)^(2/9))."""
    return int(math.floor(4.0 * (n_dates / 100.0) ** (2.0 / 9.0)))


def newey_west_se(series: Sequence | np.ndarray, lags: int | None = None) -> float:
    """HAC standard error of the series mean with Bartlett weights.

    Autocovariances are scaled by 1/(T-1) so that lags=0 reduces exactly to
    the plain Fama-MacBeth standard error sd/sqrt(T) with sample sd.
    """
    x = np.asarray(series, dtype=float)
    T = x.size
    if lags is None:
        lags = newey_west_lag(T)
    if lags < 0:
        raise ValueError("lags must be >= 0")
    if T < 2 or T <= lags:
        raise SeriesTooShort(T, lags)
    d = x - np.mean(x)
    denom = T - 1
    s = float(d @ d) / denom
    for k in range(1, lags + 1):
        w = 1.0 - k / (lags + 1.0)
        s += 2.0 * w * float(d[k:] @ d[:-k]) / denom
    # Bartlett weighting keeps this non-negative up to rounding
    s = max(s, 0.0)
    return math.sqrt(s / T)


@dataclass(frozen=True)
class CoefficientSummary:
    """Time-series aggregation of one cross-sectional coefficient."""

    name: str
    mean: float
    fm_se: float
    fm_t: float
    nw_se: float
    nw_t: float
    daily_significant_share: float
    degenerate: bool


@dataclass(frozen=True)
class FMSummary:
    coefficients: tuple[CoefficientSummary, ...]
    avg_adj_r2: float
    n_dates: int
    nw_lags: int

    def coefficient(self, name: str) -> CoefficientSummary:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)


def _t_ratio(mean: float, se: float) -> tuple[float, bool]:
    if se > 0.0:
        return mean / se, False
    if mean == 0.0:
        return math.nan, True
    return math.copysign(math.inf, mean), True


def fama_macbeth(
    daily_fits: Mapping[dt.date, OlsFit],
    coefficient_names: Sequence[str],
    nw_lags: int | None = None,
    significance_z: float = 1.96,
) -> FMSummary:
    """Aggregate per-date cross-sectional fits into Fama-MacBeth summaries.

    For each coefficient: the arithmetic mean over dates, the plain FM
    standard error sd/sqrt(T), its t-ratio, the Newey-West t-ratio, and the
    share of dates whose own cross-sectional |t| exceeds significance_z.
    Zero-variance coefficient series get a non-finite t and a degenerate
    flag rather than being dropped.
    """
    items = sorted(daily_fits.items())
    T = len(items)
    if T < 2:
        raise TooFewDates(f"{T} dates available, need at least 2")
    coefs = np.array([fit.coefficients for _, fit in items], dtype=float)
    ses = np.array([fit.stderr for _, fit in items], dtype=float)
    if coefs.shape[1] != len(coefficient_names):
        raise ValueError(
            f"{coefs.shape[1]} coefficients per date, "
            f"{len(coefficient_names)} names given"
        )
    lags = newey_west_lag(T) if nw_lags is None else nw_lags

    summaries = []
    for i, name in enumerate(coefficient_names):
        series = coefs[:, i]
        mean = float(np.mean(series))
        fm_se = float(np.std(series, ddof=1)) / math.sqrt(T)
        fm_t, degenerate = _t_ratio(mean, fm_se)
        nw_se = newey_west_se(series, lags)
        nw_t, nw_degenerate = _t_ratio(mean, nw_se)
        with np.errstate(divide="ignore", invalid="ignore"):
            daily_t = np.where(ses[:, i] > 0.0, series / ses[:, i], np.inf)
        share = float(np.mean(np.abs(daily_t) > significance_z))
        summaries.append(
            CoefficientSummary(
                name=name,
                mean=mean,
                fm_se=fm_se,
                fm_t=fm_t,
                nw_se=nw_se,
                nw_t=nw_t,
                daily_significant_share=share,
                degenerate=degenerate or nw_degenerate,
            )
        )
    avg_adj_r2 = float(np.mean([fit.adj_r2 for _, fit in items]))
    return FMSummary(
        coefficients=tuple(summaries),
        avg_adj_r2=avg_adj_r2,
        n_dates=T,
        nw_lags=lags,
    )
