"""Factor-augmented sparse regression for high-dimensional panels.

Three-stage estimation (observed-covariate filtering, principal-component
factors, LASSO on idiosyncratic components), Gaussian-bootstrap tests for
covariance and partial-covariance structure, and the simulation and
rolling-forecast harnesses that exercise them.
"""

from .backtest import BacktestConfig, BacktestReport, audit_leakage, rank_table, rolling_backtest
from .covstruct import (
    IndexSet,
    PartialCovEstimate,
    StructureTestResult,
    block_pairs,
    cov_moment_series,
    cov_structure_test,
    offdiag_pairs,
    partial_cov_estimate,
    pcov_structure_test,
    row_pairs,
    sample_cov,
)
from .factors import (
    FactorEstimate,
    FactorSelection,
    eigenvalue_ratio_select,
    ic_select,
    pca_factors,
    rotation_matrix,
    select_factor_count,
)
from .hac import HacEstimate, KernelSpec, default_bandwidth, hac_long_run_cov, kernel_weight
from .panel import LaggedDesign, PanelData, PanelError, build_lag_matrix, load_panel_csv, save_panel_csv
from .pipeline import (
    FarmModel,
    farm_fit,
    farm_predict,
    farm_predict_at,
    load_farm_model,
    save_farm_model,
    stagewise_report,
)
from .regression import ArFit, OlsFit, RankDeficientError, ar_fit, ar_forecast, first_stage_filter, ols_fit
from .simulate import (
    SimulationConfig,
    SimulatedPanel,
    run_factor_selection,
    run_info_gains,
    run_size_power,
    simulate_dgp,
)
from .sparse import LassoFit, PenaltyPath, compatibility_constant, kkt_check, lasso_fit, lasso_path_bic

__version__ = "0.1.0"
