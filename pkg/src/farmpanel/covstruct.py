"""Covariance / partial-covariance estimation on residual panels and the
Gaussian-bootstrap tests for structure in them.

The test statistic for a pair set D and null values sigma0 is

    S = max_{(i,j) in D} | sqrt(T) (sigma_hat_ij - sigma0_ij) |

and its null quantiles are approximated by B draws of ||Z||_inf with
Z ~ N(0, Upsilon_hat), Upsilon_hat the HAC long-run covariance of the
moment series.  Rows of the input panel must already be centered (PCA
residuals and regression residuals with intercepts are).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hac import HacEstimate, KernelSpec, default_bandwidth, hac_long_run_cov
from .sparse import GRID_SIZE, XI_MIN_RATIO, _cd_gram, _path_on_gram

DEFAULT_TAUS = (0.90, 0.95, 0.99)
DEFAULT_DRAWS = 1_000


@dataclass(frozen=True)
class IndexSet:
    """Ordered set of (i, j) matrix positions to test, 0-based."""

    pairs: tuple[tuple[int, int], ...]
    n: int

    def __post_init__(self):
        pairs = tuple((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if len(pairs) == 0:
            raise ValueError("empty index set")
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate pairs in index set")
        for i, j in pairs:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"pair ({i}, {j}) out of range for n = {self.n}")

    @property
    def d(self) -> int:
        return len(self.pairs)


def offdiag_pairs(n: int) -> IndexSet:
    """All pairs (i, j) with i < j: every off-diagonal covariance once."""
    return IndexSet(tuple((i, j) for i in range(n) for j in range(i + 1, n)), n)


def row_pairs(n: int, i: int) -> IndexSet:
    """Pairs between series i and every other series."""
    return IndexSet(tuple((i, j) for j in range(n) if j != i), n)


def block_pairs(n: int, blocks: dict[int, str]) -> IndexSet:
    """Pairs (i < j) whose series lie in different blocks."""
    pairs = tuple(
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if blocks.get(i) != blocks.get(j)
    )
    return IndexSet(pairs, n)


@dataclass(frozen=True)
class StructureTestResult:
    statistic: float
    null_values: np.ndarray           # (d,)
    quantiles: dict[float, float]     # tau -> c*(tau)
    p_value: float
    draws: int                        # B
    hac: HacEstimate
    seed: int
    index_set: IndexSet
    kernel: KernelSpec
    estimates: np.ndarray = field(repr=False, default=None)  # (d,) point estimates
    max_active_set: int | None = None

    def reject(self, level: float) -> bool:
        """Reject at nominal level alpha using c*(1 - alpha)."""
        tau = round(1.0 - level, 12)
        if tau not in self.quantiles:
            raise KeyError(f"quantile {tau} not computed; have {sorted(self.quantiles)}")
        return self.statistic > self.quantiles[tau]

    def to_json(self) -> str:
        doc = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "quantiles": {f"{tau:g}": c for tau, c in sorted(self.quantiles.items())},
            "d": self.index_set.d,
            "B": self.draws,
            "seed": self.seed,
            "kernel": self.kernel.kind,
            "bandwidth": self.kernel.bandwidth,
        }
        if self.max_active_set is not None:
            doc["max_active_set"] = self.max_active_set
        return json.dumps(doc, sort_keys=True)


@dataclass(frozen=True)
class PartialCovEstimate:
    pairs: tuple[tuple[int, int], ...]
    pi_hat: np.ndarray                                 # (d,)
    residual_pairs: tuple[tuple[np.ndarray, np.ndarray], ...]
    lasso_meta: tuple[dict, ...]                       # per pair: penalties, active sizes

    @property
    def max_active_set(self) -> int:
        sizes = [max(m["active_i"], m["active_j"]) for m in self.lasso_meta]
        return max(sizes) if sizes else 0


def sample_cov(U: np.ndarray) -> np.ndarray:
    """(1/T) U U' with no mean subtraction (rows are model-centered)."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 2:
        raise ValueError("need an (n, T) panel with T >= 2")
    return U @ U.T / U.shape[1]


def cov_moment_series(U: np.ndarray, index_set: IndexSet, sigma_hat: np.ndarray) -> np.ndarray:
    """Row k at time t is U[i_k, t] U[j_k, t] - sigma_hat[i_k, j_k]; exact zero mean."""
    U = np.asarray(U, dtype=float)
    if index_set.n != U.shape[0]:
        raise ValueError("index set does not match panel height")
    ii = np.array([p[0] for p in index_set.pairs])
    jj = np.array([p[1] for p in index_set.pairs])
    return U[ii] * U[jj] - sigma_hat[ii, jj][:, None]


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(matrix)
    return (q * np.sqrt(np.maximum(w, 0.0))) @ q.T


def _bootstrap_quantiles(upsilon: np.ndarray, draws: int, seed: int,
                         taus: tuple[float, ...]) -> tuple[dict[float, float], np.ndarray]:
    """Gaussian bootstrap of ||Z||_inf via the symmetric PSD square root.

    c*(tau) is the order statistic ceil(tau * B) of the sorted draws, so
    results are bit-reproducible for a given seed.
    """
    d = upsilon.shape[0]
    root = _psd_sqrt(upsilon)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z = root @ rng.standard_normal((d, draws))
    sup = np.max(np.abs(z), axis=0)
    sup_sorted = np.sort(sup)
    quantiles = {}
    for tau in taus:
        k = min(max(int(np.ceil(tau * draws)), 1), draws)
        quantiles[round(tau, 12)] = float(sup_sorted[k - 1])
    return quantiles, sup


def _structure_test(moments: np.ndarray, estimates: np.ndarray, null_values,
                    index_set: IndexSet, kernel: KernelSpec | None, draws: int,
                    seed: int, taus, t_len: int,
                    max_active: int | None = None) -> StructureTestResult:
    if draws < 100:
        raise ValueError(f"need at least 100 bootstrap draws, got {draws}")
    null = np.broadcast_to(np.asarray(null_values, dtype=float).ravel()
                           if np.ndim(null_values) else
                           np.full(index_set.d, float(null_values)), (index_set.d,)).copy()
    if kernel is None:
        kernel = KernelSpec("bartlett", default_bandwidth(t_len))
    statistic = float(np.max(np.abs(np.sqrt(t_len) * (estimates - null))))
    hac = hac_long_run_cov(moments, kernel)
    if np.all(np.diag(hac.upsilon) <= 0.0):
        raise ValueError("degenerate test: estimated long-run covariance has zero diagonal")
    quantiles, sup = _bootstrap_quantiles(hac.upsilon, draws, seed, tuple(taus))
    p_value = float((1 + np.count_nonzero(sup >= statistic)) / (draws + 1))
    return StructureTestResult(
        statistic=statistic,
        null_values=null,
        quantiles=quantiles,
        p_value=p_value,
        draws=draws,
        hac=hac,
        seed=seed,
        index_set=index_set,
        kernel=kernel,
        estimates=estimates,
        max_active_set=max_active,
    )


def cov_structure_test(U: np.ndarray, index_set: IndexSet, null_values=0.0,
                       kernel: KernelSpec | None = None, draws: int = DEFAULT_DRAWS,
                       seed: int = 0, taus=DEFAULT_TAUS) -> StructureTestResult:
    """Test H0: Sigma_D = Sigma0_D on the residual panel U (n x T, centered)."""
    U = np.asarray(U, dtype=float)
    t_len = U.shape[1]
    sigma = sample_cov(U)
    ii = np.array([p[0] for p in index_set.pairs])
    jj = np.array([p[1] for p in index_set.pairs])
    estimates = sigma[ii, jj]
    moments = cov_moment_series(U, index_set, sigma)
    return _structure_test(moments, estimates, null_values, index_set, kernel,
                           draws, seed, taus, t_len)


def partial_cov_estimate(U: np.ndarray, index_set: IndexSet,
                         grid_size: int = GRID_SIZE, xi_min_ratio: float = XI_MIN_RATIO,
                         penalty: float | None = None) -> PartialCovEstimate:
    """Nodewise-LASSO partial covariances pi_ij for the requested pairs.

    For each pair, V_ij is the residual of the LASSO regression of U_i on
    all series except i and j (penalty chosen per regression by BIC, or
    fixed when ``penalty`` is given), and pi_ij = mean_t V_ij,t V_ji,t.
    Regressions are deduplicated across pairs, and every regression
    reuses one shared Gram matrix of the panel.
    """
    U = np.asarray(U, dtype=float)
    n, t_len = U.shape
    if n < 3:
        raise ValueError(f"partial covariance needs n >= 3 series, got {n}")
    for i, j in index_set.pairs:
        if i == j:
            raise ValueError(f"diagonal pair ({i}, {j}) has no partial covariance")
    gram = U @ U.T / t_len       # shared across all nodewise regressions

    cache: dict[tuple[int, int, int], tuple[np.ndarray, float, int]] = {}

    def nodewise(target: int, drop_a: int, drop_b: int):
        key = (target, *sorted((drop_a, drop_b)))
        if key in cache:
            return cache[key]
        keep = np.array([k for k in range(n) if k not in (drop_a, drop_b)])
        c = gram[keep, target]
        sub = gram[np.ix_(keep, keep)]
        y_var = gram[target, target]
        if penalty is None:
            grid, thetas, _, _, chosen = _path_on_gram(c, sub, y_var, t_len,
                                                       grid_size, xi_min_ratio)
            theta = thetas[chosen]
            xi = float(grid[chosen])
        else:
            theta, _, _ = _cd_gram(c, sub, penalty, np.zeros(len(keep)), 1e-10, 10_000)
            xi = float(penalty)
        resid = U[target] - theta @ U[keep]
        out = (resid, xi, int(np.count_nonzero(theta)))
        cache[key] = out
        return out

    pi_hat = np.empty(index_set.d)
    residual_pairs = []
    meta = []
    for k, (i, j) in enumerate(index_set.pairs):
        v_ij, xi_i, act_i = nodewise(i, i, j)
        v_ji, xi_j, act_j = nodewise(j, i, j)
        pi_hat[k] = float(v_ij @ v_ji / t_len)
        residual_pairs.append((v_ij, v_ji))
        meta.append({"xi_i": xi_i, "active_i": act_i, "xi_j": xi_j, "active_j": act_j})
    return PartialCovEstimate(
        pairs=index_set.pairs,
        pi_hat=pi_hat,
        residual_pairs=tuple(residual_pairs),
        lasso_meta=tuple(meta),
    )


def pcov_structure_test(U: np.ndarray, index_set: IndexSet, null_values=0.0,
                        kernel: KernelSpec | None = None, draws: int = DEFAULT_DRAWS,
                        seed: int = 0, taus=DEFAULT_TAUS,
                        grid_size: int = GRID_SIZE, xi_min_ratio: float = XI_MIN_RATIO,
                        penalty: float | None = None) -> StructureTestResult:
    """Test H0: Pi_D = Pi0_D using the nodewise-LASSO partial covariances."""
    U = np.asarray(U, dtype=float)
    t_len = U.shape[1]
    est = partial_cov_estimate(U, index_set, grid_size=grid_size,
                               xi_min_ratio=xi_min_ratio, penalty=penalty)
    moments = np.empty((index_set.d, t_len))
    for k, (v_ij, v_ji) in enumerate(est.residual_pairs):
        moments[k] = v_ij * v_ji - est.pi_hat[k]
    return _structure_test(moments, est.pi_hat, null_values, index_set, kernel,
                           draws, seed, taus, t_len, max_active=est.max_active_set)
