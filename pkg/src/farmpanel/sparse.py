"""LASSO by cyclic coordinate descent, with BIC selection along a penalty path.

The objective is (1/T) ||y - X theta||^2 + xi ||theta||_1, i.e. the mean
squared loss carries the 1/T factor and the penalty is unscaled.  The
solver works on the Gram quantities c = X'y/T and G = X'X/T, which lets
many regressions on overlapping column sets (the nodewise regressions of
the partial-covariance estimator) share a single Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONV_TOL = 1e-8        # max coefficient change per sweep
MAX_ITER = 10_000      # sweeps
GRID_SIZE = 100
XI_MIN_RATIO = 1e-3


@dataclass(frozen=True)
class LassoFit:
    theta: np.ndarray
    xi: float
    intercept: float | None
    active_set: tuple[int, ...]
    objective: float
    iterations: int
    converged: bool
    zero_variance: tuple[int, ...] = ()


@dataclass(frozen=True)
class PenaltyPath:
    grid: np.ndarray               # strictly descending, grid[0] = xi_max
    fits: tuple[LassoFit, ...]
    bic: tuple[float, ...]
    chosen: int

    @property
    def chosen_fit(self) -> LassoFit:
        return self.fits[self.chosen]


def _soft_threshold(value: float, cut: float) -> float:
    if value > cut:
        return value - cut
    if value < -cut:
        return value + cut
    return 0.0


def _subspace_solve(theta, work, c, G, half_xi) -> bool:
    """Newton step on the current sign orthant with a crossing line search.

    On the active coordinates the LASSO optimum for the current sign
    pattern solves G_AA theta_A = c_A - (xi/2) sign(theta_A).  When the
    solution leaves the orthant, step toward it only as far as the first
    sign crossing and pin that coordinate at exactly zero (the restricted
    objective is a convex quadratic along the segment, so every partial
    step descends).  Falls back to coordinate sweeps on a singular or
    non-descending system.
    """
    act = work[theta[work] != 0.0]
    if len(act) == 0:
        return False
    signs = np.sign(theta[act])
    gaa = G[np.ix_(act, act)]
    rhs = c[act] - half_xi * signs
    try:
        sol = np.linalg.solve(gaa, rhs)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(sol)):
        return False
    cur = theta[act]
    crossing = (np.sign(sol) != signs) if half_xi > 0 else np.zeros(len(act), dtype=bool)
    if np.any(crossing):
        denom = cur[crossing] - sol[crossing]
        # signs differ, so cur and sol lie on opposite sides: denom != 0.
        alphas = cur[crossing] / denom
        alpha = float(np.min(alphas))
        if not 0.0 < alpha <= 1.0:
            return False
        cand = cur + alpha * (sol - cur)
        hit = np.zeros(len(act), dtype=bool)
        hit[np.nonzero(crossing)[0][alphas <= alpha]] = True
        cand[hit] = 0.0
    else:
        cand = sol

    def restricted(v):
        return v @ gaa @ v - 2.0 * v @ c[act] + 2.0 * half_xi * np.sum(np.abs(v))

    before = restricted(cur)
    if restricted(cand) > before - 1e-15 * (1.0 + abs(before)):
        return False
    theta[act] = cand
    return True


def _cd_gram(c, G, xi, theta0, conv_tol, max_iter):
    """Cyclic coordinate descent on Gram quantities with a working set.

    c = X'y/T, G = X'X/T.  The stationarity conditions are
    2(c - G theta)_j = xi * sign(theta_j) on the active set.  Cyclic
    sweeps run over a working set of candidate coordinates; once the
    sign pattern stabilizes the sweep is finished by an exact solve on
    the active subspace.  A vectorized screen over all coordinates then
    admits any violators and certifies convergence (every coordinate
    update would move less than conv_tol).  Returns
    (theta, sweeps, converged).
    """
    theta = np.array(theta0, dtype=float, copy=True)
    diag = np.ascontiguousarray(np.diag(G))
    dead = diag <= 0.0
    theta[dead] = 0.0
    diag_safe = np.where(dead, 1.0, diag)
    q = G @ theta
    half_xi = 0.5 * xi
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        # Screen: coordinates whose update would move, plus current support.
        rho = c - q + diag * theta
        shifted = np.sign(rho) * np.maximum(np.abs(rho) - half_xi, 0.0) / diag_safe
        shifted[dead] = 0.0
        moving = np.abs(shifted - theta) >= conv_tol
        if not np.any(moving):
            converged = True
            break
        work = np.nonzero(moving | (theta != 0.0))[0]
        work = work[~dead[work]]
        while sweeps < max_iter:
            sweeps += 1
            max_change = 0.0
            for j in work:
                old = theta[j]
                rho_j = c[j] - q[j] + diag[j] * old
                new = _soft_threshold(rho_j, half_xi) / diag[j]
                if new != old:
                    theta[j] = new
                    q += G[:, j] * (new - old)
                    change = abs(new - old)
                    if change > max_change:
                        max_change = change
            if max_change < conv_tol:
                break
            # Finish the sweep with an orthant Newton step; each either lands
            # on the restricted optimum or pins a crossing coordinate to zero.
            if _subspace_solve(theta, work, c, G, half_xi):
                q = G @ theta
        q = G @ theta                 # refresh against float drift before rescreen
    return theta, sweeps, converged


def xi_max_from_moments(c: np.ndarray) -> float:
    """Smallest penalty shrinking everything to zero: max_j |2 c_j|."""
    return float(np.max(np.abs(2.0 * c))) if len(c) else 0.0


def lasso_fit(y, X, xi, warm_start=None, fit_intercept: bool = False,
              conv_tol: float = CONV_TOL, max_iter: int = MAX_ITER) -> LassoFit:
    """Solve the LASSO at a single penalty value.

    Zero-variance columns are forced to coefficient 0 and reported in
    ``zero_variance``.  On non-convergence the best iterate is returned
    with ``converged=False``.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t_len, m = X.shape
    if t_len != len(y):
        raise ValueError(f"X has {t_len} rows for {len(y)} targets")
    if xi < 0:
        raise ValueError(f"penalty must be nonnegative, got {xi}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValueError("non-finite values in regression input")

    if fit_intercept:
        y_mean = y.mean()
        x_mean = X.mean(axis=0)
        yc = y - y_mean
        xc = X - x_mean
    else:
        yc, xc = y, X

    c = xc.T @ yc / t_len
    G = xc.T @ xc / t_len
    theta0 = np.zeros(m) if warm_start is None else np.asarray(warm_start, dtype=float)
    theta, sweeps, converged = _cd_gram(c, G, xi, theta0, conv_tol, max_iter)

    resid = yc - xc @ theta
    objective = float(resid @ resid / t_len + xi * np.sum(np.abs(theta)))
    intercept = float(y_mean - x_mean @ theta) if fit_intercept else None
    return LassoFit(
        theta=theta,
        xi=float(xi),
        intercept=intercept,
        active_set=tuple(int(j) for j in np.nonzero(theta)[0]),
        objective=objective,
        iterations=sweeps,
        converged=converged,
        zero_variance=tuple(int(j) for j in np.nonzero(np.diag(G) <= 0.0)[0]),
    )


def _path_on_gram(c, G, y_var, t_len, grid_size, xi_min_ratio,
                  conv_tol=CONV_TOL, max_iter=MAX_ITER):
    """Warm-started BIC path on Gram quantities.

    y_var = y'y/T.  Returns (grid, thetas, rss, bic, chosen).  The BIC is
    T log(RSS/T) + |active| log T; ties go to the sparser (larger) xi.
    """
    m = len(c)
    xi_max = xi_max_from_moments(c)
    if xi_max <= 0:
        # Target is orthogonal to every column; the path is all-zero.
        grid = np.array([0.0])
        thetas = np.zeros((1, m))
        rss = np.array([y_var * t_len])
        bic = t_len * np.log(np.maximum(rss / t_len, np.finfo(float).tiny))
        return grid, thetas, rss, bic, 0
    grid = np.exp(np.linspace(np.log(xi_max), np.log(xi_max * xi_min_ratio), grid_size))
    grid[0] = xi_max
    thetas = np.empty((grid_size, m))
    rss = np.empty(grid_size)
    theta = np.zeros(m)
    for k, xi in enumerate(grid):
        theta, _, _ = _cd_gram(c, G, xi, theta, conv_tol, max_iter)
        thetas[k] = theta
        rss[k] = t_len * max(y_var - 2.0 * theta @ c + theta @ G @ theta, 0.0)
    nactive = np.count_nonzero(thetas, axis=1)
    bic = t_len * np.log(np.maximum(rss / t_len, np.finfo(float).tiny)) + nactive * np.log(t_len)
    chosen = int(np.argmin(bic))   # first minimum = largest xi on the descending grid
    return grid, thetas, rss, bic, chosen


def lasso_path_bic(y, X, grid_size: int = GRID_SIZE, xi_min_ratio: float = XI_MIN_RATIO,
                   fit_intercept: bool = False, standardize: bool = False,
                   conv_tol: float = CONV_TOL, max_iter: int = MAX_ITER) -> PenaltyPath:
    """Log-spaced penalty path from xi_max down, selected by BIC.

    ``standardize`` rescales columns to unit standard deviation inside
    the solver (coefficients are mapped back); the grid then refers to
    the standardized problem.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be at least 2, got {grid_size}")
    if not 0 < xi_min_ratio < 1:
        raise ValueError(f"xi_min_ratio must lie in (0, 1), got {xi_min_ratio}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t_len, m = X.shape
    if fit_intercept:
        y_mean = y.mean()
        x_mean = X.mean(axis=0)
        yc = y - y_mean
        xc = X - x_mean
    else:
        y_mean = 0.0
        x_mean = np.zeros(m)
        yc, xc = y, X

    scale = np.ones(m)
    if standardize:
        # Root mean square of the (possibly centered) columns.
        scale = np.sqrt(np.mean(xc * xc, axis=0))
        scale[scale <= 0] = 1.0
        xc = xc / scale

    c = xc.T @ yc / t_len
    G = xc.T @ xc / t_len
    y_var = float(yc @ yc / t_len)
    grid, thetas, rss, bic, chosen = _path_on_gram(
        c, G, y_var, t_len, grid_size, xi_min_ratio, conv_tol, max_iter
    )
    fits = []
    for k, xi in enumerate(grid):
        theta = thetas[k] / scale
        intercept = float(y_mean - x_mean @ theta) if fit_intercept else None
        fits.append(LassoFit(
            theta=theta,
            xi=float(xi),
            intercept=intercept,
            active_set=tuple(int(j) for j in np.nonzero(theta)[0]),
            objective=float(rss[k] / t_len + xi * np.sum(np.abs(thetas[k]))),
            iterations=0,
            converged=True,
            zero_variance=tuple(int(j) for j in np.nonzero(np.diag(G) <= 0.0)[0]),
        ))
    return PenaltyPath(grid=grid, fits=tuple(fits), bic=tuple(float(b) for b in bic),
                       chosen=chosen)


def kkt_check(fit: LassoFit, y, X, tol: float = 1e-6) -> tuple[bool, float]:
    """Verify stationarity of a fit; returns (passed, worst violation).

    Active coordinates must satisfy |(2/T) X_j'(y - X theta) - xi sign(theta_j)|
    <= tol; inactive ones |(2/T) X_j'(y - X theta)| <= xi + tol.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t_len = len(y)
    if X.shape != (t_len, len(fit.theta)):
        raise ValueError("shape mismatch between fit and data")
    resid = y - X @ fit.theta
    if fit.intercept is not None:
        resid = resid - fit.intercept
    grad = 2.0 * X.T @ resid / t_len
    worst = 0.0
    active = set(fit.active_set)
    dead = set(fit.zero_variance)
    for j in range(len(fit.theta)):
        if j in dead:
            continue
        if j in active:
            v = abs(grad[j] - fit.xi * np.sign(fit.theta[j]))
        else:
            v = max(abs(grad[j]) - fit.xi, 0.0)
        worst = max(worst, float(v))
    return worst <= tol, worst


def compatibility_constant(M: np.ndarray, support: tuple[int, ...], zeta: float = 3.0,
                           n_samples: int = 20_000, seed: int = 0) -> float:
    """Brute-force compatibility constant of M on the cone
    ||x_{S^c}||_1 <= zeta ||x_S||_1.

    kappa^2 = |S| * min x'Mx over the cone normalized to ||x_S||_1 = 1,
    approximated by random search.  Only meant for tiny diagnostics.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    s_idx = np.asarray(sorted(set(support)), dtype=int)
    if len(s_idx) == 0 or np.any(s_idx < 0) or np.any(s_idx >= n):
        raise ValueError("support must be a nonempty subset of 0..n-1")
    comp = np.asarray([j for j in range(n) if j not in set(support)], dtype=int)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_samples // 256 + 1):
        k = min(256, n_samples)
        xs = rng.dirichlet(np.ones(len(s_idx)), size=k) * rng.choice([-1.0, 1.0], size=(k, len(s_idx)))
        x = np.zeros((k, n))
        x[:, s_idx] = xs
        if len(comp):
            mass = rng.uniform(0.0, zeta, size=k)
            xc = rng.dirichlet(np.ones(len(comp)), size=k) * rng.choice([-1.0, 1.0], size=(k, len(comp)))
            x[:, comp] = xc * mass[:, None]
        quad = np.einsum("ki,ij,kj->k", x, M, x)
        best = min(best, float(np.min(quad)))
    return float(np.sqrt(max(len(s_idx) * best, 0.0)))
