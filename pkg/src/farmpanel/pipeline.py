"""Three-stage estimation: covariate filtering, PCA factors, sparse links.

Stage 1 regresses each series on its observed covariates (an intercept by
default), stage 2 extracts principal-component factors from the residual
panel, and stage 3 runs a BIC-selected LASSO of each target's
idiosyncratic series on all the others.  An optional diagnostic test for
a diagonal residual covariance decides whether stage 2 is needed at all:
if the stage-1 residuals already look cross-sectionally uncorrelated the
factor stage is skipped (r = 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .covstruct import (
    IndexSet,
    KernelSpec,
    StructureTestResult,
    cov_structure_test,
    offdiag_pairs,
    pcov_structure_test,
)
from .factors import FactorEstimate, FactorSelection, pca_factors, select_factor_count
from .panel import PanelData
from .regression import OlsFit, first_stage_filter
from .sparse import GRID_SIZE, XI_MIN_RATIO, LassoFit, lasso_fit, lasso_path_bic

DIAG_PAIR_CAP = 2_000
FULL_PAIR_LIMIT = 64


@dataclass(frozen=True)
class FarmModel:
    """Fitted three-stage model for a set of target series."""

    series_ids: tuple[str, ...]
    first_stage: tuple[OlsFit | None, ...]
    residual_panel: np.ndarray                    # stage-1 residuals (n, T)
    factor_estimate: FactorEstimate | None        # None when r = 0
    selection: FactorSelection
    third_stage: dict[int, LassoFit]              # target index -> fit on U_{-i}
    diagnostics: dict[str, StructureTestResult] = field(default_factory=dict)
    intercepts: tuple[float, ...] = ()            # stage-1 intercepts (0 when absent)

    @property
    def n_series(self) -> int:
        return len(self.series_ids)

    @property
    def r(self) -> int:
        return 0 if self.factor_estimate is None else self.factor_estimate.r

    @property
    def idiosyncratic(self) -> np.ndarray:
        if self.factor_estimate is None:
            return self.residual_panel
        return self.factor_estimate.residuals


def _diag_index_set(n: int, cap: int, seed: int) -> IndexSet:
    full = offdiag_pairs(n)
    if n <= FULL_PAIR_LIMIT or full.d <= cap:
        return full
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
    pick = rng.choice(full.d, size=cap, replace=False)
    pick.sort()
    return IndexSet(tuple(full.pairs[k] for k in pick), n)


def farm_fit(
    panel: PanelData,
    covariates=None,
    targets=None,
    selection_method: str = "er",
    fixed_r: int | None = None,
    kmax: int | None = None,
    add_intercept: bool = True,
    run_diagnostics: bool = False,
    skip_factors: bool | None = None,
    diagnostic: str = "cov",
    diag_level: float = 0.05,
    kernel: KernelSpec | None = None,
    draws: int = 500,
    seed: int = 0,
    grid_size: int = GRID_SIZE,
    xi_min_ratio: float = XI_MIN_RATIO,
    penalty_override: float | None = None,
    diag_pair_cap: int = DIAG_PAIR_CAP,
) -> FarmModel:
    """Fit the three-stage model.

    ``skip_factors`` forces the stage-2 branch: None lets the stage-1
    diagnostic decide (skip unless it rejects a diagonal covariance at
    ``diag_level``; without diagnostics the factor stage always runs),
    True skips it, False forces it.  Stage-3 LASSO regressions carry no
    intercept (the idiosyncratic panel is centered by construction);
    their penalties come from the BIC path unless ``penalty_override``
    pins one (infinity collapses stage 3 to zero exactly, so the model
    degenerates to the factor regression).
    """
    n, t_len = panel.shape
    if targets is None:
        targets = list(range(n))
    targets = [int(i) for i in targets]
    if not targets:
        raise ValueError("no target series given")
    for i in targets:
        if not 0 <= i < n:
            raise ValueError(f"target index {i} out of range")
    if diagnostic not in ("cov", "pcov"):
        raise ValueError(f"unknown diagnostic {diagnostic!r}")

    residuals, fits = first_stage_filter(panel, covariates, add_intercept=add_intercept)
    diagnostics: dict[str, StructureTestResult] = {}
    tester = cov_structure_test if diagnostic == "cov" else pcov_structure_test

    decide_by_test = run_diagnostics and skip_factors is None
    if run_diagnostics:
        pairs = _diag_index_set(n, diag_pair_cap, seed)
        diagnostics["stage1"] = tester(residuals, pairs, 0.0, kernel=kernel,
                                       draws=draws, seed=seed)
    if skip_factors is None:
        if decide_by_test:
            skip = not diagnostics["stage1"].reject(diag_level)
        else:
            skip = False
    else:
        skip = bool(skip_factors)

    if skip:
        factor_estimate = None
        sel = FactorSelection(method="fixed", kmax=0, chosen_r=0, criterion_values=())
        idio = residuals
    else:
        if selection_method == "fixed":
            sel = select_factor_count(residuals, "fixed", kmax=kmax, fixed_r=fixed_r)
        else:
            sel = select_factor_count(residuals, selection_method, kmax=kmax)
        if sel.chosen_r == 0:
            factor_estimate = None
            idio = residuals
        else:
            factor_estimate = pca_factors(residuals, sel.chosen_r)
            idio = factor_estimate.residuals
        if run_diagnostics and factor_estimate is not None:
            pairs = _diag_index_set(n, diag_pair_cap, seed)
            diagnostics["stage2"] = tester(idio, pairs, 0.0, kernel=kernel,
                                           draws=draws, seed=seed + 1)

    third: dict[int, LassoFit] = {}
    # When the factor stage reconstructs the panel to machine precision the
    # leftover is float dust; fitting it would chase the exact rank
    # deficiency of PCA residuals, so the sparse stage is a no-op.
    dust = float(np.mean(idio * idio)) <= 1e-16 * float(np.mean(residuals * residuals))
    collapse = penalty_override is not None and np.isinf(penalty_override)
    for i in targets:
        keep = np.array([k for k in range(n) if k != i])
        if dust or collapse:
            third[i] = LassoFit(theta=np.zeros(n - 1),
                                xi=float("inf") if collapse else 0.0,
                                intercept=None, active_set=(), objective=0.0,
                                iterations=0, converged=True)
            continue
        if penalty_override is not None:
            third[i] = lasso_fit(idio[i], idio[keep].T, penalty_override,
                                 fit_intercept=False)
            continue
        path = lasso_path_bic(idio[i], idio[keep].T, grid_size=grid_size,
                              xi_min_ratio=xi_min_ratio, fit_intercept=False)
        third[i] = path.chosen_fit

    intercepts = tuple(
        float(f.coefficients[0]) if (f is not None and f.intercept_included) else 0.0
        for f in fits
    )
    return FarmModel(
        series_ids=panel.series_ids,
        first_stage=tuple(fits),
        residual_panel=residuals,
        factor_estimate=factor_estimate,
        selection=sel,
        third_stage=third,
        diagnostics=diagnostics,
        intercepts=intercepts,
    )


def farm_predict(model: FarmModel, i: int, x_new=None, f_new=None, u_minus_new=None) -> float:
    """Three-term prediction gamma_i'x + lambda_i'f + theta_i'u_{-i}.

    ``x_new`` are the target's stage-1 covariates (in the fitted order;
    the intercept, when fitted, is added automatically), ``f_new`` the r
    factor values and ``u_minus_new`` the other series' idiosyncratic
    values.
    """
    if i not in model.third_stage:
        raise KeyError(f"series {i} was not a fitted target")
    fit1 = model.first_stage[i]
    value = 0.0
    if fit1 is not None:
        coef = fit1.coefficients[1:] if fit1.intercept_included else fit1.coefficients
        if fit1.intercept_included:
            value += fit1.coefficients[0]
        x = np.zeros(len(coef)) if x_new is None else np.asarray(x_new, dtype=float).ravel()
        if len(x) != len(coef):
            raise ValueError(f"expected {len(coef)} covariates, got {len(x)}")
        value += float(coef @ x)
    elif x_new is not None and len(np.atleast_1d(x_new)):
        raise ValueError("model has no first-stage covariates for this series")

    if model.factor_estimate is not None:
        lam = model.factor_estimate.loadings[i]
        f = np.asarray(f_new, dtype=float).ravel() if f_new is not None else np.zeros(len(lam))
        if len(f) != len(lam):
            raise ValueError(f"expected {len(lam)} factor values, got {len(f)}")
        value += float(lam @ f)

    theta = model.third_stage[i].theta
    u = (np.asarray(u_minus_new, dtype=float).ravel()
         if u_minus_new is not None else np.zeros(len(theta)))
    if len(u) != len(theta):
        raise ValueError(f"expected {len(theta)} idiosyncratic values, got {len(u)}")
    value += float(theta @ u)
    return value


def farm_predict_at(model: FarmModel, i: int, t: int) -> float:
    """In-sample prediction at time t using the fitted stage quantities.

    Telescoping identity: this equals Y_it minus the stage-3 residual.
    """
    if i not in model.third_stage:
        raise KeyError(f"series {i} was not a fitted target")
    fit1 = model.first_stage[i]
    value = float(fit1.fitted[t]) if fit1 is not None else 0.0
    if model.factor_estimate is not None:
        value += float(model.factor_estimate.loadings[i] @ model.factor_estimate.factors[t])
    keep = [k for k in range(model.n_series) if k != i]
    value += float(model.third_stage[i].theta @ model.idiosyncratic[keep, t])
    return value


def stagewise_report(model: FarmModel) -> dict:
    """JSON-able summary: chosen r, criterion values, stage variances,
    diagnostic p-values, active-set sizes."""
    n, t_len = model.residual_panel.shape
    report: dict = {
        "n_series": n,
        "n_periods": t_len,
        "selection": {
            "method": model.selection.method,
            "kmax": model.selection.kmax,
            "chosen_r": model.selection.chosen_r,
            "criterion_values": list(model.selection.criterion_values),
        },
        "factor_stage": "skipped" if model.factor_estimate is None else "fitted",
        "stage1_residual_variance": [float(v) for v in np.mean(model.residual_panel**2, axis=1)],
    }
    if model.factor_estimate is not None:
        report["eigenvalues"] = [float(v) for v in model.factor_estimate.eigenvalues]
        report["stage2_residual_variance"] = [
            float(v) for v in np.mean(model.factor_estimate.residuals**2, axis=1)
        ]
    report["targets"] = {
        str(i): {
            "active_set_size": len(fit.active_set),
            "penalty": fit.xi,
            "stage3_residual_variance": _stage3_variance(model, i),
        }
        for i, fit in sorted(model.third_stage.items())
    }
    report["diagnostics"] = {
        name: {"statistic": res.statistic, "p_value": res.p_value}
        for name, res in sorted(model.diagnostics.items())
    }
    return report


def _stage3_variance(model: FarmModel, i: int) -> float:
    keep = [k for k in range(model.n_series) if k != i]
    resid = model.idiosyncratic[i] - model.third_stage[i].theta @ model.idiosyncratic[keep]
    return float(np.mean(resid**2))


def _matrix_doc(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [list(map(float, row)) for row in np.atleast_2d(a)]}


def _matrix_from_doc(doc) -> np.ndarray:
    return np.asarray(doc["data"], dtype=float).reshape(doc["shape"])


def save_farm_model(model: FarmModel, path) -> None:
    """Serialize a fitted model to a single JSON document."""
    fitted = np.vstack([
        f.fitted if f is not None else np.zeros(model.residual_panel.shape[1])
        for f in model.first_stage
    ])
    doc = {
        "series_ids": list(model.series_ids),
        "residual_panel": _matrix_doc(model.residual_panel),
        "first_stage_fitted": _matrix_doc(fitted),
        "selection": {
            "method": model.selection.method,
            "kmax": model.selection.kmax,
            "chosen_r": model.selection.chosen_r,
            "criterion_values": list(model.selection.criterion_values),
        },
        "first_stage": [
            None if f is None else {
                "coefficients": [float(v) for v in f.coefficients],
                "intercept_included": f.intercept_included,
            }
            for f in model.first_stage
        ],
        "factor_estimate": None if model.factor_estimate is None else {
            "factors": _matrix_doc(model.factor_estimate.factors),
            "loadings": _matrix_doc(model.factor_estimate.loadings),
            "eigenvalues": [float(v) for v in model.factor_estimate.eigenvalues],
        },
        "third_stage": {
            str(i): {
                "theta": [float(v) for v in fit.theta],
                "xi": fit.xi,
                "active_set": list(fit.active_set),
            }
            for i, fit in sorted(model.third_stage.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_farm_model(path) -> FarmModel:
    """Rebuild a model saved by :func:`save_farm_model`.

    The reconstruction recomputes derived quantities (fitted values,
    residuals) from the stored matrices.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    residuals = _matrix_from_doc(doc["residual_panel"])
    fitted = _matrix_from_doc(doc["first_stage_fitted"])
    n, t_len = residuals.shape
    fits = []
    for i, entry in enumerate(doc["first_stage"]):
        if entry is None:
            fits.append(None)
            continue
        coef = np.asarray(entry["coefficients"], dtype=float)
        fits.append(OlsFit(coefficients=coef, residuals=residuals[i],
                           fitted=fitted[i],
                           intercept_included=entry["intercept_included"]))
    sel_doc = doc["selection"]
    sel = FactorSelection(method=sel_doc["method"], kmax=sel_doc["kmax"],
                          chosen_r=sel_doc["chosen_r"],
                          criterion_values=tuple(sel_doc["criterion_values"]))
    fe = None
    if doc["factor_estimate"] is not None:
        factors = _matrix_from_doc(doc["factor_estimate"]["factors"])
        loadings = _matrix_from_doc(doc["factor_estimate"]["loadings"])
        eig = np.asarray(doc["factor_estimate"]["eigenvalues"], dtype=float)
        fe = FactorEstimate(factors=factors, loadings=loadings, eigenvalues=eig,
                            residuals=residuals - loadings @ factors.T, r=loadings.shape[1])
    third = {}
    for key, entry in doc["third_stage"].items():
        theta = np.asarray(entry["theta"], dtype=float)
        third[int(key)] = LassoFit(
            theta=theta, xi=float(entry["xi"]), intercept=None,
            active_set=tuple(entry["active_set"]),
            objective=float("nan"), iterations=0, converged=True,
        )
    intercepts = tuple(
        float(f.coefficients[0]) if (f is not None and f.intercept_included) else 0.0
        for f in fits
    )
    return FarmModel(
        series_ids=tuple(doc["series_ids"]),
        first_stage=tuple(fits),
        residual_panel=residuals,
        factor_estimate=fe,
        selection=sel,
        third_stage=third,
        diagnostics={},
        intercepts=intercepts,
    )
