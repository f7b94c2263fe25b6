"""Rolling-window one-step-ahead forecasting comparison.

Four nested models are compared per series over a fixed-length rolling
window: an autoregression, the AR plus a sparse regression of its
residual on lags of the whole residual panel, the AR plus a factor term
(principal components of the residual panel), and the factor model plus
a sparse regression on lags of the idiosyncratic panel.  Everything a
forecast for t0+1 touches is computed from data up to t0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .factors import pca_factors, select_factor_count
from .panel import PanelData
from .regression import ar_fit
from .sparse import lasso_path_bic

METHODS = ("ar", "sr", "pcr", "farmpredict")


@dataclass(frozen=True)
class BacktestConfig:
    window: int = 480
    p: int = 4
    factor_rule: str = "er"                  # "er", "ic1".."ic4", "fixed"
    fixed_r: int | None = None
    kmax: int | None = None
    methods: tuple[str, ...] = METHODS
    groups: dict[str, str] | None = None     # series id -> group label
    targets: tuple[int, ...] | None = None   # restrict forecast errors to these series
    pcr_lead: bool = False                   # regress R_{t+1} on F_t instead of R_t on F_t
    penalty_override: float | None = None    # None: BIC per window; inf: exact collapse
    standardize: bool = True
    grid_size: int = 50
    xi_min_ratio: float = 1e-3

    def __post_init__(self):
        methods = tuple(m.lower() for m in self.methods)
        object.__setattr__(self, "methods", methods)
        for m in methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if not methods:
            raise ValueError("no methods selected")
        if self.p < 1 or self.window <= 3 * self.p:
            raise ValueError(f"window {self.window} too short for p = {self.p}")


@dataclass(frozen=True)
class BacktestReport:
    methods: tuple[str, ...]
    series_ids: tuple[str, ...]
    targets: tuple[int, ...]
    mse: dict[str, np.ndarray]                    # method -> (len(targets),)
    errors: dict[str, np.ndarray] = field(repr=False)  # method -> (origins, targets)
    origins: tuple[int, ...] = ()
    rank_frequency: dict[str, dict[str, tuple[float, ...]]] = field(default_factory=dict)
    n_forecasts: int = 0


def _sparse_addon_forecast(panel: np.ndarray, p: int, targets, config: BacktestConfig):
    """Forecast next-step values of each target row of ``panel`` from p
    lags of all rows, by LASSO with intercept.  Returns {target: forecast}."""
    n, t_len = panel.shape
    rows = t_len - p                    # usable targets: times p .. t_len-1
    design = np.empty((rows, n * p))
    for lag in range(1, p + 1):
        design[:, (lag - 1) * n:lag * n] = panel[:, p - lag:t_len - lag].T
    latest = np.empty(n * p)
    for lag in range(1, p + 1):
        latest[(lag - 1) * n:lag * n] = panel[:, t_len - lag]
    out = {}
    for i in targets:
        y = panel[i, p:]
        if config.penalty_override is not None and np.isinf(config.penalty_override):
            out[i] = 0.0
            continue
        if config.penalty_override is not None:
            from .sparse import lasso_fit
            fit = lasso_fit(y, design, config.penalty_override, fit_intercept=True)
        else:
            fit = lasso_path_bic(y, design, grid_size=config.grid_size,
                                 xi_min_ratio=config.xi_min_ratio,
                                 fit_intercept=True,
                                 standardize=config.standardize).chosen_fit
        out[i] = float(fit.intercept + fit.theta @ latest)
    return out


def _window_forecasts(window_values: np.ndarray, config: BacktestConfig, targets):
    """One-step forecasts for every method from one window of data."""
    n, w = window_values.shape
    p = config.p
    need = set(config.methods)
    fc = {m: {} for m in need}

    ar_fits = [ar_fit(window_values[i], p) for i in range(n)]
    ar_forecasts = np.array([
        f.intercept + f.phi @ window_values[i, -1:-p - 1:-1]
        for i, f in enumerate(ar_fits)
    ])
    if "ar" in need:
        fc["ar"] = {i: float(ar_forecasts[i]) for i in targets}

    if need & {"sr", "pcr", "farmpredict"}:
        # In-window AR residual panel over times p .. w-1.
        resid = np.empty((n, w - p))
        for i, f in enumerate(ar_fits):
            design = np.column_stack(
                [window_values[i, p - lag:w - lag] for lag in range(1, p + 1)]
            )
            resid[i] = window_values[i, p:] - f.intercept - design @ f.phi

    if "sr" in need:
        addon = _sparse_addon_forecast(resid, p, targets, config)
        fc["sr"] = {i: float(ar_forecasts[i] + addon[i]) for i in targets}

    if need & {"pcr", "farmpredict"}:
        if config.factor_rule == "fixed":
            r = config.fixed_r if config.fixed_r is not None else 1
        else:
            r = select_factor_count(resid, config.factor_rule, kmax=config.kmax).chosen_r
        est = pca_factors(resid, r)
        t_res = resid.shape[1]
        if config.pcr_lead:
            # Regress R_{t+1} on F_t, then apply to the last factor value.
            f_lag = est.factors[:-1]                      # (t_res-1, r)
            lam = np.linalg.lstsq(f_lag, resid[:, 1:].T, rcond=None)[0].T  # (n, r)
        else:
            lam = est.loadings                            # contemporaneous (literal timing)
        factor_term = lam @ est.factors[-1]
        pcr_forecasts = ar_forecasts + factor_term
        if "pcr" in need:
            fc["pcr"] = {i: float(pcr_forecasts[i]) for i in targets}
        if "farmpredict" in need:
            idio = resid - est.loadings @ est.factors.T
            addon = _sparse_addon_forecast(idio, p, targets, config)
            fc["farmpredict"] = {i: float(pcr_forecasts[i] + addon[i]) for i in targets}
    return fc


def rolling_backtest(panel: PanelData, config: BacktestConfig) -> BacktestReport:
    """Walk the panel one period at a time and accumulate squared errors.

    Origin t0 fits on columns t0-window+1 .. t0 and forecasts t0+1; the
    first origin is window-1 (zero-based), so there are T - window
    forecasts in total.
    """
    n, t_len = panel.shape
    w = config.window
    if w + config.p >= t_len:
        raise ValueError(f"window {w} plus lag order leaves no forecasts in T = {t_len}")
    targets = tuple(config.targets) if config.targets is not None else tuple(range(n))
    for i in targets:
        if not 0 <= i < n:
            raise ValueError(f"target index {i} out of range")
    origins = tuple(range(w - 1, t_len - 1))
    errors = {m: np.empty((len(origins), len(targets))) for m in config.methods}
    for k, t0 in enumerate(origins):
        window_values = panel.values[:, t0 - w + 1:t0 + 1]
        fc = _window_forecasts(window_values, config, targets)
        actual = panel.values[:, t0 + 1]
        for m in config.methods:
            for c, i in enumerate(targets):
                errors[m][k, c] = actual[i] - fc[m][i]
    mse = {m: np.mean(errors[m] ** 2, axis=0) for m in config.methods}
    report = BacktestReport(
        methods=config.methods,
        series_ids=panel.series_ids,
        targets=targets,
        mse=mse,
        errors=errors,
        origins=origins,
        n_forecasts=len(origins),
    )
    groups = config.groups or {}
    return _with_rank_frequency(report, groups)


def _with_rank_frequency(report: BacktestReport, groups: dict[str, str]) -> BacktestReport:
    freq = _rank_frequency(report, groups)
    return BacktestReport(
        methods=report.methods,
        series_ids=report.series_ids,
        targets=report.targets,
        mse=report.mse,
        errors=report.errors,
        origins=report.origins,
        rank_frequency=freq,
        n_forecasts=report.n_forecasts,
    )


def _rank_frequency(report: BacktestReport, groups: dict[str, str]):
    """Per group and method, frequency of each MSE rank 1..#methods.

    Ranks are assigned by sorting on (mse, method order), so ties break
    deterministically toward the method listed first.
    """
    n_m = len(report.methods)
    labels = {}
    for c, i in enumerate(report.targets):
        sid = report.series_ids[i]
        labels.setdefault(groups.get(sid, "all"), []).append(c)
    out: dict[str, dict[str, tuple[float, ...]]] = {}
    group_names = sorted(labels) if groups else ["all"]
    for gname in group_names:
        cols = labels.get(gname, [])
        counts = {m: np.zeros(n_m) for m in report.methods}
        for c in cols:
            order = sorted(range(n_m), key=lambda k: (report.mse[report.methods[k]][c], k))
            for rank, k in enumerate(order):
                counts[report.methods[k]][rank] += 1.0
        total = max(len(cols), 1)
        out[gname] = {m: tuple(v / total for v in counts[m]) for m in report.methods}
    if groups:
        # Aggregate row over every target.
        counts = {m: np.zeros(n_m) for m in report.methods}
        for c in range(len(report.targets)):
            order = sorted(range(n_m), key=lambda k: (report.mse[report.methods[k]][c], k))
            for rank, k in enumerate(order):
                counts[report.methods[k]][rank] += 1.0
        total = max(len(report.targets), 1)
        out["all"] = {m: tuple(v / total for v in counts[m]) for m in report.methods}
    return out


def rank_table(report: BacktestReport, groups: dict[str, str] | None = None) -> list[dict]:
    """Rank-frequency rows, one per (group, method), ready for CSV."""
    freq = report.rank_frequency
    if groups is not None:
        known = set(report.series_ids)
        for sid in groups:
            if sid not in known:
                raise KeyError(f"unknown series id {sid!r} in group map")
        freq = _rank_frequency(report, groups)
    rows = []
    for gname in sorted(freq):
        for m in report.methods:
            row = {"group": gname, "method": m}
            for rank, value in enumerate(freq[gname][m], start=1):
                row[f"rank{rank}"] = value
            rows.append(row)
    return rows


def report_to_json(report: BacktestReport) -> str:
    doc = {
        "methods": list(report.methods),
        "targets": [int(i) for i in report.targets],
        "series_ids": [report.series_ids[i] for i in report.targets],
        "n_forecasts": report.n_forecasts,
        "mse": {m: [float(v) for v in report.mse[m]] for m in report.methods},
        "errors": {m: [[float(v) for v in row] for row in report.errors[m]]
                   for m in report.methods},
        "rank_frequency": {
            g: {m: list(v) for m, v in sorted(per.items())}
            for g, per in sorted(report.rank_frequency.items())
        },
    }
    return json.dumps(doc, sort_keys=True)


def audit_leakage(panel: PanelData, config: BacktestConfig, origin: int) -> bool:
    """True when the forecast at ``origin`` ignores data after it.

    Perturbs every series at origin+1 and asserts the forecasts are
    unchanged; any use of post-origin data would shift them.
    """
    w = config.window
    if not w - 1 <= origin < panel.n_periods - 1:
        raise ValueError(f"origin {origin} out of range")
    targets = tuple(config.targets) if config.targets is not None else tuple(range(panel.n_series))
    window_values = panel.values[:, origin - w + 1:origin + 1]
    base = _window_forecasts(window_values, config, targets)
    perturbed = np.array(panel.values, copy=True)
    perturbed[:, origin + 1] += 1e3 * (1.0 + np.abs(perturbed[:, origin + 1]))
    window_after = perturbed[:, origin - w + 1:origin + 1]
    after = _window_forecasts(window_after, config, targets)
    for m in base:
        for i in targets:
            if base[m][i] != after[m][i]:
                return False
    return True
