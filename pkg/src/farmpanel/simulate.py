"""Synthetic panel generator and the Monte Carlo harnesses built on it.

The data generating process is a three-factor model

    Y_it = lam_i' F_t + W_it
    F_t  = 0.8 F_{t-1} + E_t,            E_t ~ N(0, I_3)
    W_it = phi W_{i,t-1} + U_it
    U_1t = th12 U_2t + th13 U_3t + th14 U_4t + th15 U_5t + V_1t
    U_it = V_it  (i >= 2),               V_it ~ N(0, 0.25)

with loadings redrawn every replication: row 1 is N(-6, 0.2^2) per
component, the others N(2, 1).  The chain in the first row plants known
covariances between series 1 and series 2..5, which the size/power
harness tests for.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .covstruct import KernelSpec, cov_structure_test, default_bandwidth, row_pairs
from .factors import pca_factors, select_factor_count
from .panel import PanelData
from .regression import first_stage_filter
from .sparse import lasso_path_bic

POWER_THETA = (0.8, 0.9, -0.7, 0.5)
SCENARIOS = ("known-factors", "known-r", "er", "ic1", "ic2", "ic3", "ic4")


@dataclass(frozen=True)
class SimulationConfig:
    T: int = 100
    n: int = 50
    r: int = 3
    phi: float = 0.0
    theta: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    factor_ar: float = 0.8
    v_variance: float = 0.25
    loading_mean_first: float = -6.0
    loading_sd_first: float = 0.2
    loading_mean: float = 2.0
    loading_sd: float = 1.0
    replications: int = 500
    seed: int = 0
    burn_in: int = 500

    def __post_init__(self):
        if self.T < 2 or self.n < 1:
            raise ValueError(f"bad panel dimensions ({self.n}, {self.T})")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.burn_in < 100:
            raise ValueError("burn-in must be at least 100 periods")
        if any(self.theta) and self.n < 5:
            raise ValueError("the dependence chain needs n >= 5 series")
        for name in ("phi", "factor_ar", "v_variance"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class SimulatedPanel:
    panel: PanelData
    true_factors: np.ndarray       # (T, r)
    true_loadings: np.ndarray      # (n, r)
    true_innovations: np.ndarray   # (n, T): the chained U series
    true_idiosyncratic: np.ndarray  # (n, T): W, the AR-filtered component


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))


def simulate_dgp(config: SimulationConfig, replication_index: int = 0) -> SimulatedPanel:
    """Draw one replication; fully determined by (config.seed, replication_index)."""
    rng = _rng(config.seed, replication_index)
    n, t_len, r = config.n, config.T, config.r
    total = t_len + config.burn_in

    loadings = np.empty((n, r))
    loadings[0] = rng.normal(config.loading_mean_first, config.loading_sd_first, size=r)
    loadings[1:] = rng.normal(config.loading_mean, config.loading_sd, size=(n - 1, r))

    shocks = rng.standard_normal((total, r))
    factors = np.empty((total, r))
    factors[0] = shocks[0]
    for t in range(1, total):
        factors[t] = config.factor_ar * factors[t - 1] + shocks[t]

    v = rng.normal(0.0, np.sqrt(config.v_variance), size=(n, total))
    innov = v.copy()
    if any(config.theta):
        th = np.asarray(config.theta)
        innov[0] = th @ v[1:5] + v[0]

    if config.phi == 0.0:
        idio = innov.copy()
    else:
        idio = np.empty((n, total))
        idio[:, 0] = innov[:, 0]
        for t in range(1, total):
            idio[:, t] = config.phi * idio[:, t - 1] + innov[:, t]

    factors = factors[config.burn_in:]
    innov = innov[:, config.burn_in:]
    idio = idio[:, config.burn_in:]
    values = loadings @ factors.T + idio
    panel = PanelData(
        values=values,
        series_ids=tuple(f"s{i + 1:04d}" for i in range(n)),
        time_ids=tuple(str(t + 1) for t in range(t_len)),
    )
    return SimulatedPanel(
        panel=panel,
        true_factors=factors,
        true_loadings=loadings,
        true_innovations=innov,
        true_idiosyncratic=idio,
    )


def power_config(config: SimulationConfig) -> SimulationConfig:
    """The same design with the dependence chain switched on."""
    return replace(config, theta=POWER_THETA)


def residual_panel_for_scenario(sim: SimulatedPanel, scenario: str,
                                kmax: int | None = None) -> tuple[np.ndarray, int]:
    """Idiosyncratic panel estimate under a factor-knowledge scenario.

    known-factors regresses each series on the true factors (with an
    intercept); the others demean and run PCA with r fixed at the truth
    (known-r) or selected by the named rule.  Returns (U_hat, r_used).
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    panel = sim.panel
    if scenario == "known-factors":
        covs = [sim.true_factors] * panel.n_series
        resid, _ = first_stage_filter(panel, covs, add_intercept=True)
        return resid, sim.true_factors.shape[1]
    demeaned, _ = first_stage_filter(panel, None, add_intercept=True)
    if scenario == "known-r":
        r = sim.true_factors.shape[1]
    else:
        r = select_factor_count(demeaned, scenario, kmax=kmax).chosen_r
    est = pca_factors(demeaned, r)
    return est.residuals, r


@dataclass(frozen=True)
class SizePowerResult:
    config: SimulationConfig
    scenario: str
    levels: tuple[float, ...]
    rejections: np.ndarray          # (reps, len(levels)) booleans
    chosen_r: np.ndarray            # (reps,)
    statistics: np.ndarray          # (reps,)

    @property
    def rejection_rates(self) -> dict[float, float]:
        return {
            lvl: float(np.mean(self.rejections[:, k]))
            for k, lvl in enumerate(self.levels)
        }


def _size_power_rep(config: SimulationConfig, scenario: str, taus, draws: int,
                    kernel: KernelSpec, kmax: int | None, rep: int):
    sim = simulate_dgp(config, rep)
    u_hat, r_used = residual_panel_for_scenario(sim, scenario, kmax=kmax)
    test_seed = int(_rng(config.seed, rep, 5).integers(0, 2**63 - 1))
    res = cov_structure_test(u_hat, row_pairs(config.n, 0), 0.0, kernel=kernel,
                             draws=draws, seed=test_seed, taus=taus)
    rej = [res.statistic > res.quantiles[tau] for tau in taus]
    return rej, r_used, res.statistic


def run_size_power(config: SimulationConfig, scenario: str,
                   levels=(0.10, 0.05, 0.01), draws: int = 500,
                   kernel: KernelSpec | None = None, kmax: int | None = None,
                   threads: int = 1) -> SizePowerResult:
    """Rejection frequencies of the covariance test across replications.

    The null is that every covariance between series 1 and the others is
    zero; rejection at level a compares the statistic with c*(1 - a).
    """
    levels = tuple(levels)
    taus = tuple(round(1.0 - lvl, 12) for lvl in levels)
    if kernel is None:
        kernel = KernelSpec("bartlett", default_bandwidth(config.T))
    one = partial(_size_power_rep, config, scenario, taus, draws, kernel, kmax)
    results = _map_indexed(one, config.replications, threads)
    rejections = np.array([r[0] for r in results], dtype=bool)
    chosen = np.array([r[1] for r in results], dtype=int)
    stats = np.array([r[2] for r in results])
    return SizePowerResult(config=config, scenario=scenario, levels=levels,
                           rejections=rejections, chosen_r=chosen, statistics=stats)


def _selection_rep(config: SimulationConfig, method: str, kmax: int | None, rep: int) -> int:
    sim = simulate_dgp(config, rep)
    demeaned, _ = first_stage_filter(sim.panel, None, add_intercept=True)
    return select_factor_count(demeaned, method, kmax=kmax).chosen_r


def run_factor_selection(config: SimulationConfig, method: str,
                         kmax: int | None = None, threads: int = 1) -> np.ndarray:
    """Chosen factor count per replication for a selection rule."""
    one = partial(_selection_rep, config, method, kmax)
    return np.array(_map_indexed(one, config.replications, threads), dtype=int)


@dataclass(frozen=True)
class InfoGainsResult:
    config: SimulationConfig
    folds: int
    methods: tuple[str, ...]
    mse: dict[str, np.ndarray] = field(repr=False)   # method -> (reps,) CV-averaged MSE

    @property
    def mean_mse(self) -> dict[str, float]:
        return {m: float(np.mean(v)) for m, v in self.mse.items()}


def _fold_slices(t_len: int, folds: int) -> list[np.ndarray]:
    if folds < 2 or t_len < 2 * folds:
        raise ValueError(f"cannot split T = {t_len} into {folds} blocks")
    edges = np.linspace(0, t_len, folds + 1).astype(int)
    return [np.arange(edges[k], edges[k + 1]) for k in range(folds)]


def _info_gains_rep(config: SimulationConfig, folds: int, methods, factor_rule: str,
                    fixed_r: int, kmax: int | None, grid_size: int,
                    xi_min_ratio: float, rep: int) -> dict[str, float]:
    sim = simulate_dgp(config, rep)
    y = sim.panel.values[0]
    others = sim.panel.values[1:]
    slices = _fold_slices(config.T, folds)
    errors = {m: [] for m in methods}
    for test_idx in slices:
        train_mask = np.ones(config.T, dtype=bool)
        train_mask[test_idx] = False
        y_tr, y_te = y[train_mask], y[~train_mask]
        x_tr, x_te = others[:, train_mask], others[:, ~train_mask]
        if "sr" in methods:
            path = lasso_path_bic(y_tr, x_tr.T, grid_size=grid_size,
                                  xi_min_ratio=xi_min_ratio)
            pred = path.chosen_fit.theta @ x_te
            errors["sr"].append(float(np.mean((y_te - pred) ** 2)))
        if "pcr" in methods or "farmpredict" in methods:
            if factor_rule == "fixed":
                r = fixed_r
            else:
                r = select_factor_count(x_tr, factor_rule, kmax=kmax).chosen_r
            est = pca_factors(x_tr, r)
            lam1 = est.factors.T @ y_tr / len(y_tr)       # OLS, F'F/T = I
            f_te = np.linalg.lstsq(est.loadings, x_te, rcond=None)[0]  # (r, T_te)
            pcr_pred = lam1 @ f_te
            if "pcr" in methods:
                errors["pcr"].append(float(np.mean((y_te - pcr_pred) ** 2)))
            if "farmpredict" in methods:
                u_tr = est.residuals
                u1_tr = y_tr - lam1 @ est.factors.T
                path = lasso_path_bic(u1_tr, u_tr.T, grid_size=grid_size)
                u_te = x_te - est.loadings @ f_te
                pred = pcr_pred + path.chosen_fit.theta @ u_te
                errors["farmpredict"].append(float(np.mean((y_te - pred) ** 2)))
    return {m: float(np.mean(errors[m])) for m in methods}


def run_info_gains(config: SimulationConfig, folds: int = 5,
                   methods=("sr", "pcr", "farmpredict"),
                   factor_rule: str = "fixed", fixed_r: int | None = None,
                   kmax: int | None = None, grid_size: int = 100,
                   xi_min_ratio: float = 1e-4, threads: int = 1) -> InfoGainsResult:
    """Held-out MSE for predicting series 1, averaged over contiguous CV folds.

    SR regresses Y_1 on the other series by BIC LASSO.  PCR extracts
    factors from the other series' training panel by PCA and regresses
    Y_1 on them; held-out factor values come from the cross-sectional
    projection on the trained loadings (which reproduces the in-sample
    PCA factors exactly).  FarmPredict adds a BIC LASSO of the PCR
    residual on the other series' idiosyncratic components.

    ``xi_min_ratio`` applies to the raw-target (SR) regression and is
    deeper than the solver default because the factor component dominates
    that target's scale, so xi_max is huge relative to the residual the
    sparse fit works on.  The idiosyncratic add-on regression uses the
    solver default floor.
    """
    methods = tuple(m.lower() for m in methods)
    for m in methods:
        if m not in ("sr", "pcr", "farmpredict"):
            raise ValueError(f"unknown method {m!r}")
    if fixed_r is None:
        fixed_r = config.r

    one = partial(_info_gains_rep, config, folds, methods, factor_rule, fixed_r,
                  kmax, grid_size, xi_min_ratio)
    results = _map_indexed(one, config.replications, threads)
    mse = {m: np.array([r[m] for r in results]) for m in methods}
    return InfoGainsResult(config=config, folds=folds, methods=methods, mse=mse)


def _map_indexed(fn, count: int, workers: int) -> list:
    """Apply fn to 0..count-1, on worker processes when workers > 1.

    Results come back in index order, so the output is deterministic
    regardless of scheduling.  Processes rather than threads: the inner
    solvers hold the GIL between BLAS calls.
    """
    if workers and workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(count), chunksize=max(1, count // (8 * workers))))
    return [fn(rep) for rep in range(count)]
