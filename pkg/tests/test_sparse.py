import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmpanel.regression import ols_fit
from farmpanel.sparse import (
    compatibility_constant,
    kkt_check,
    lasso_fit,
    lasso_path_bic,
    xi_max_from_moments,
)


def proximal_gradient_oracle(y, X, xi, tol=1e-12, max_iter=500_000):
    """Independent ISTA solver for cross-checking the coordinate descent."""
    t_len, m = X.shape
    c = X.T @ y / t_len
    G = X.T @ X / t_len
    step = 1.0 / (2.0 * np.linalg.eigvalsh(G)[-1])
    theta = np.zeros(m)
    for _ in range(max_iter):
        grad = 2.0 * (G @ theta - c)
        z = theta - step * grad
        new = np.sign(z) * np.maximum(np.abs(z) - step * xi, 0.0)
        if np.abs(new - theta).max() < tol:
            theta = new
            break
        theta = new
    return theta


def objective(y, X, theta, xi):
    r = y - X @ theta
    return r @ r / len(y) + xi * np.abs(theta).sum()


class TestLassoFit:
    def test_full_shrinkage_at_xi_max(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((30, 5))
        y = rng.standard_normal(30)
        xi_max = xi_max_from_moments(X.T @ y / 30)
        for xi in (xi_max, 1.5 * xi_max):
            fit = lasso_fit(y, X, xi)
            np.testing.assert_array_equal(fit.theta, 0.0)

    def test_unpenalized_limit_matches_ols(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((40, 4))
        y = X @ np.array([1.0, 0.0, -2.0, 0.5]) + 0.2 * rng.standard_normal(40)
        fit = lasso_fit(y, X, 0.0)
        ols = ols_fit(y, X)
        assert np.abs(fit.theta - ols.coefficients).max() <= 1e-6

    def test_against_proximal_gradient_and_dense_grid(self):
        rng = np.random.default_rng(2)
        t_len, m = 20, 6
        X = rng.standard_normal((t_len, m))
        y = X @ np.array([1.0, -0.5, 0.0, 0.0, 0.25, 0.0]) + 0.3 * rng.standard_normal(t_len)
        xi = 0.1
        fit = lasso_fit(y, X, xi)
        oracle = proximal_gradient_oracle(y, X, xi)
        assert np.abs(fit.theta - oracle).max() <= 1e-6

        # Exhaustive grid {-2, ..., 2}^6 with step 0.25.
        axis = np.arange(-2.0, 2.0 + 1e-9, 0.25)
        c = X.T @ y / t_len
        G = X.T @ X / t_len
        y2 = y @ y / t_len
        best = np.inf
        grids = np.meshgrid(axis, axis, indexing="ij")
        tail = np.stack(np.meshgrid(axis, axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 4)
        for a in axis:
            for b in axis:
                theta_block = np.concatenate(
                    [np.broadcast_to([a, b], (len(tail), 2)), tail], axis=1
                )
                quad = np.einsum("ki,ij,kj->k", theta_block, G, theta_block)
                vals = y2 - 2.0 * theta_block @ c + quad + xi * np.abs(theta_block).sum(axis=1)
                best = min(best, float(vals.min()))
        assert fit.objective <= best + 1e-12

    def test_zero_variance_column_reported(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((25, 3))
        X[:, 1] = 0.0
        y = rng.standard_normal(25)
        fit = lasso_fit(y, X, 0.01)
        assert fit.zero_variance == (1,)
        assert fit.theta[1] == 0.0

    def test_objective_invariant(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((30, 8))
        y = rng.standard_normal(30)
        fit = lasso_fit(y, X, 0.05)
        assert fit.objective == pytest.approx(objective(y, X, fit.theta, 0.05), abs=1e-10)

    def test_objective_monotone_in_sweeps(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((50, 12))
        y = X[:, 0] - X[:, 3] + 0.5 * rng.standard_normal(50)
        objs = [lasso_fit(y, X, 0.08, max_iter=k).objective for k in range(1, 10)]
        assert all(a >= b - 1e-12 for a, b in zip(objs, objs[1:]))

    def test_scaling_covariance(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((40, 5))
        y = rng.standard_normal(40)
        base = lasso_fit(y, X, 0.2)
        scaled = lasso_fit(3.0 * y, X, 3.0 * 0.2)
        np.testing.assert_allclose(scaled.theta, 3.0 * base.theta, atol=1e-8)

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            lasso_fit(np.ones(5), np.ones((5, 1)), -0.1)

    def test_intercept_centering(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((60, 3)) + 5.0
        y = 2.0 + X @ np.array([1.0, 0.0, 0.0]) + 0.1 * rng.standard_normal(60)
        fit = lasso_fit(y, X, 0.01, fit_intercept=True)
        assert fit.intercept is not None
        pred = fit.intercept + X @ fit.theta
        assert np.mean((y - pred) ** 2) < 0.05


class TestKkt:
    def test_solver_output_passes(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 6))
        y = rng.standard_normal(30)
        fit = lasso_fit(y, X, 0.15, conv_tol=1e-10)
        ok, worst = kkt_check(fit, y, X, tol=1e-6)
        assert ok, worst

    def test_perturbed_active_coordinate_fails(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((30, 4))
        y = X[:, 0] + 0.1 * rng.standard_normal(30)
        fit = lasso_fit(y, X, 0.05)
        assert 0 in fit.active_set
        theta = fit.theta.copy()
        theta[0] += 0.1
        from dataclasses import replace
        bad = replace(fit, theta=theta)
        ok, worst = kkt_check(bad, y, X, tol=1e-6)
        assert not ok
        assert worst > 1e-3

    def test_closed_form_orthogonal_design(self):
        # Orthogonal two-column design: theta_j = S(c_j, xi/2)/d_j exactly.
        t_len = 16
        x1 = np.ones(t_len)
        x2 = np.tile([1.0, -1.0], t_len // 2)
        X = np.column_stack([x1, x2])
        y = 1.3 * x1 + 0.05 * x2
        xi = 0.4
        c = X.T @ y / t_len          # = (1.3, 0.05)
        d = np.diag(X.T @ X / t_len)  # = (1, 1)
        expected = np.sign(c) * np.maximum(np.abs(c) - xi / 2.0, 0.0) / d
        assert expected[1] == 0.0
        fit = lasso_fit(y, X, xi)
        np.testing.assert_allclose(fit.theta, expected, atol=1e-12)
        ok, _ = kkt_check(fit, y, X, tol=1e-10)
        assert ok


class TestPath:
    def test_support_recovery_frequency(self):
        # The true predictor is always found; exact recovery runs at ~74%
        # because the BIC trades a log-T penalty against chi-square noise,
        # so one spurious extra slips in on a quarter of the draws.
        hits = 0
        contains = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((200, 10))
            y = X[:, 0] + 0.05 * rng.standard_normal(200)
            path = lasso_path_bic(y, X)
            hits += path.chosen_fit.active_set == (0,)
            contains += 0 in path.chosen_fit.active_set
        assert contains == 100
        assert hits >= 65

    def test_null_model_frequency(self):
        empty = 0
        for seed in range(100):
            rng = np.random.default_rng(1_000 + seed)
            X = rng.standard_normal((400, 10))
            y = rng.standard_normal(400)
            path = lasso_path_bic(y, X)
            empty += len(path.chosen_fit.active_set) == 0
        assert empty >= 80

    def test_empty_model_bic_exact(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((80, 6))
        y = rng.standard_normal(80)
        path = lasso_path_bic(y, X)
        assert path.bic[0] == pytest.approx(80.0 * np.log(np.mean(y**2)), abs=1e-10)

    def test_grid_shape(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((50, 4))
        y = X[:, 1] + 0.1 * rng.standard_normal(50)
        path = lasso_path_bic(y, X, grid_size=25, xi_min_ratio=1e-2)
        assert len(path.grid) == 25
        assert np.all(np.diff(path.grid) < 0)
        assert path.grid[0] == pytest.approx(xi_max_from_moments(X.T @ y / 50))
        np.testing.assert_array_equal(path.fits[0].theta, 0.0)

    def test_path_continuity(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((60, 8))
        y = X @ rng.standard_normal(8) + 0.2 * rng.standard_normal(60)
        path = lasso_path_bic(y, X, grid_size=50)
        col_norm = np.sqrt(np.mean(X**2, axis=0)).max()
        for a, b, xi_a, xi_b in zip(path.fits, path.fits[1:], path.grid, path.grid[1:]):
            jump = np.abs(a.theta - b.theta).max()
            assert jump <= 10.0 * (xi_a - xi_b + 1e-12) * max(col_norm, 1.0) + 1e-6

    def test_standardize_keeps_residual_semantics(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((70, 5)) * np.array([1.0, 10.0, 0.1, 1.0, 5.0])
        y = X[:, 1] / 10.0 + 0.1 * rng.standard_normal(70)
        path = lasso_path_bic(y, X, standardize=True)
        fit = path.chosen_fit
        assert 1 in fit.active_set
        resid = y - X @ fit.theta
        assert np.mean(resid**2) < 0.05


class TestCompatibility:
    def test_identity_matrix_value(self):
        kappa = compatibility_constant(np.eye(6), (0, 1), zeta=3.0, n_samples=40_000, seed=0)
        # For M = I the constrained minimum of |S| x'Mx at ||x_S||_1 = 1 is 1.
        assert kappa == pytest.approx(1.0, abs=0.05)

    def test_scaling(self):
        kappa1 = compatibility_constant(np.eye(4), (0,), n_samples=20_000, seed=1)
        kappa4 = compatibility_constant(4.0 * np.eye(4), (0,), n_samples=20_000, seed=1)
        assert kappa4 == pytest.approx(2.0 * kappa1, rel=0.05)
