"""Dense least-squares machinery: per-series filtering and AR fitting.

Everything here is plain OLS solved through an orthogonal decomposition
(SVD-based lstsq), never the normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import PanelData

# Relative rank tolerance: smallest retained singular value must be at
# least RANK_RTOL times the largest.
RANK_RTOL = 1e-10


class RankDeficientError(ValueError):
    """Design matrix is numerically rank deficient."""

    def __init__(self, column: int, message: str):
        super().__init__(message)
        self.column = column


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray     # (k,) — intercept first when included
    residuals: np.ndarray        # (T,)
    fitted: np.ndarray           # (T,)
    intercept_included: bool


@dataclass(frozen=True)
class ArFit:
    order: int
    intercept: float
    phi: np.ndarray              # (p,), lag-1 coefficient first
    residual_variance: float


def _find_collinear_column(design: np.ndarray) -> int:
    # Greedy scan: first column that adds no rank beyond the previous ones.
    rank = 0
    for j in range(design.shape[1]):
        new_rank = np.linalg.matrix_rank(design[:, : j + 1], tol=None)
        if new_rank == rank:
            return j
        rank = new_rank
    return design.shape[1] - 1


def ols_fit(targets: np.ndarray, design: np.ndarray, add_intercept: bool = False) -> OlsFit:
    """Least squares of ``targets`` on ``design``.

    With ``add_intercept`` a column of ones is prepended and its
    coefficient reported first.  Raises :class:`RankDeficientError`
    naming the offending column when the design is collinear beyond
    tolerance.
    """
    y = np.asarray(targets, dtype=float).ravel()
    x = np.asarray(design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"design has {x.shape[0]} rows for {y.shape[0]} targets")
    if add_intercept:
        x = np.column_stack([np.ones(len(y)), x])
    t_len, k = x.shape
    if t_len <= k:
        raise ValueError(f"need T > k, got T = {t_len}, k = {k}")
    if k == 0:
        raise ValueError("empty design")
    coef, _, rank, sv = np.linalg.lstsq(x, y, rcond=RANK_RTOL)
    if rank < k:
        j = _find_collinear_column(x)
        label = "intercept" if (add_intercept and j == 0) else f"column {j - int(add_intercept)}"
        raise RankDeficientError(j, f"design is rank deficient ({rank} < {k}); {label} is collinear")
    fitted = x @ coef
    return OlsFit(
        coefficients=coef,
        residuals=y - fitted,
        fitted=fitted,
        intercept_included=add_intercept,
    )


def first_stage_filter(
    panel: PanelData,
    covariates: list[np.ndarray | None] | None = None,
    add_intercept: bool = True,
) -> tuple[np.ndarray, list[OlsFit | None]]:
    """Regress each series on its own covariates, return the residual panel.

    ``covariates[i]`` is a (T, k_i) matrix (or None for no covariates).
    With no covariates and an intercept this is per-series demeaning; with
    neither, the residual row equals the raw series and the fit is None.
    """
    n, t_len = panel.shape
    if covariates is None:
        covariates = [None] * n
    if len(covariates) != n:
        raise ValueError(f"{len(covariates)} covariate blocks for {n} series")
    residuals = np.empty((n, t_len))
    fits: list[OlsFit | None] = []
    for i in range(n):
        y = panel.values[i]
        x = covariates[i]
        if x is None and not add_intercept:
            residuals[i] = y
            fits.append(None)
            continue
        if x is None:
            x = np.empty((t_len, 0))
        else:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != t_len:
                raise ValueError(
                    f"series {panel.series_ids[i]!r}: covariates have "
                    f"{x.shape[0]} rows, panel has {t_len}"
                )
        try:
            fit = ols_fit(y, x, add_intercept=add_intercept)
        except RankDeficientError as err:
            raise RankDeficientError(
                err.column, f"series {panel.series_ids[i]!r}: {err}"
            ) from None
        except ValueError as err:
            raise ValueError(f"series {panel.series_ids[i]!r}: {err}") from None
        residuals[i] = fit.residuals
        fits.append(fit)
    return residuals, fits


def ar_fit(series: np.ndarray, p: int) -> ArFit:
    """OLS autoregression of order p with an intercept.

    Coefficients come back lag-1 first.  Requires T > 2p + 2 so the fit
    is not vacuous.
    """
    y = np.asarray(series, dtype=float).ravel()
    t_len = len(y)
    if p < 1:
        raise ValueError(f"AR order must be positive, got {p}")
    if t_len <= 2 * p + 2:
        raise ValueError(f"need T > 2p + 2 = {2 * p + 2} observations, got {t_len}")
    design = np.column_stack([y[p - lag:t_len - lag] for lag in range(1, p + 1)])
    fit = ols_fit(y[p:], design, add_intercept=True)
    resid = fit.residuals
    return ArFit(
        order=p,
        intercept=float(fit.coefficients[0]),
        phi=fit.coefficients[1:],
        residual_variance=float(resid @ resid / len(resid)),
    )


def ar_forecast(fit: ArFit, recent: np.ndarray) -> float:
    """One-step forecast from the last p observations, most recent first."""
    recent = np.asarray(recent, dtype=float).ravel()
    if len(recent) != fit.order:
        raise ValueError(f"need {fit.order} recent values, got {len(recent)}")
    return float(fit.intercept + fit.phi @ recent)
