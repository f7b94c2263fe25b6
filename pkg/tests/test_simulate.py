import numpy as np
import pytest

from farmpanel.simulate import (
    SimulationConfig,
    power_config,
    residual_panel_for_scenario,
    run_factor_selection,
    run_info_gains,
    run_size_power,
    simulate_dgp,
)


class TestDgp:
    def test_exact_reconstruction(self):
        sim = simulate_dgp(SimulationConfig(T=50, n=10, phi=0.5, replications=1, seed=1), 0)
        rebuilt = sim.true_loadings @ sim.true_factors.T + sim.true_idiosyncratic
        np.testing.assert_allclose(sim.panel.values, rebuilt, atol=1e-12)

    def test_bit_exact_reproducibility(self):
        cfg = SimulationConfig(T=40, n=8, phi=0.5, theta=(0.8, 0.9, -0.7, 0.5),
                               replications=3, seed=9)
        a = simulate_dgp(cfg, 2)
        b = simulate_dgp(cfg, 2)
        np.testing.assert_array_equal(a.panel.values, b.panel.values)
        np.testing.assert_array_equal(a.true_factors, b.true_factors)
        c = simulate_dgp(cfg, 1)
        assert not np.array_equal(a.panel.values, c.panel.values)

    def test_null_innovations_uncorrelated(self):
        cfg = SimulationConfig(T=2000, n=10, replications=1, seed=3)
        sim = simulate_dgp(cfg, 0)
        u = sim.true_innovations
        cors = []
        for i in range(10):
            for j in range(i + 1, 10):
                cors.append(abs(np.mean(u[i] * u[j])) / 0.25)
        assert np.mean(cors) <= 4.0 / np.sqrt(2000)

    def test_planted_covariance_moment(self):
        cfg = SimulationConfig(T=100_000, n=6, theta=(0.8, 0.9, -0.7, 0.5),
                               replications=1, seed=4)
        sim = simulate_dgp(cfg, 0)
        u = sim.true_innovations
        # Cov(U_1, U_2) = 0.8 * 0.25 from the chain with independent shocks.
        assert np.mean(u[0] * u[1]) == pytest.approx(0.2, abs=0.01)
        assert np.mean(u[0] * u[3]) == pytest.approx(-0.7 * 0.25, abs=0.01)
        target = 0.25 * (1 + 0.8**2 + 0.9**2 + 0.7**2 + 0.5**2)
        assert np.mean(u[0] ** 2) == pytest.approx(target, rel=0.02)

    def test_idiosyncratic_autocorrelation(self):
        cfg = SimulationConfig(T=100_000, n=3, phi=0.5, replications=1, seed=5)
        sim = simulate_dgp(cfg, 0)
        w = sim.true_idiosyncratic[1]
        rho = np.mean(w[1:] * w[:-1]) / np.mean(w**2)
        assert rho == pytest.approx(0.5, abs=0.02)

    def test_factor_autocorrelation_and_variance(self):
        cfg = SimulationConfig(T=50_000, n=3, replications=1, seed=6)
        sim = simulate_dgp(cfg, 0)
        f = sim.true_factors[:, 0]
        assert np.var(f) == pytest.approx(1.0 / (1.0 - 0.64), rel=0.05)
        rho = np.mean(f[1:] * f[:-1]) / np.var(f)
        assert rho == pytest.approx(0.8, abs=0.02)

    def test_loading_laws(self):
        cfg = SimulationConfig(T=10, n=4000, replications=1, seed=7)
        sim = simulate_dgp(cfg, 0)
        lam = sim.true_loadings
        assert np.mean(lam[0]) == pytest.approx(-6.0, abs=0.5)
        assert np.mean(lam[1:]) == pytest.approx(2.0, abs=0.05)
        assert np.std(lam[1:]) == pytest.approx(1.0, abs=0.05)

    def test_theta_chain_needs_five_series(self):
        with pytest.raises(ValueError):
            SimulationConfig(T=50, n=4, theta=(0.8, 0.9, -0.7, 0.5))

    def test_power_config(self):
        cfg = power_config(SimulationConfig(T=50, n=10))
        assert cfg.theta == (0.8, 0.9, -0.7, 0.5)


class TestScenarios:
    def test_known_factors_removes_common_component(self):
        sim = simulate_dgp(SimulationConfig(T=300, n=12, replications=1, seed=8), 0)
        u_hat, r = residual_panel_for_scenario(sim, "known-factors")
        assert r == 3
        # Residuals should be close to the true idiosyncratic component.
        diff = u_hat - (sim.true_idiosyncratic - sim.true_idiosyncratic.mean(axis=1, keepdims=True))
        assert np.sqrt(np.mean(diff**2)) < 0.06
        assert np.abs(diff).max() < 0.6

    def test_known_r_uses_truth(self):
        sim = simulate_dgp(SimulationConfig(T=120, n=10, replications=1, seed=9), 0)
        _, r = residual_panel_for_scenario(sim, "known-r")
        assert r == 3

    def test_unknown_scenario(self):
        sim = simulate_dgp(SimulationConfig(T=60, n=6, replications=1, seed=10), 0)
        with pytest.raises(ValueError):
            residual_panel_for_scenario(sim, "oracle")


class TestHarnesses:
    def test_size_power_shapes_and_determinism(self):
        cfg = SimulationConfig(T=80, n=10, replications=6, seed=11)
        res = run_size_power(cfg, "known-factors", draws=150)
        assert res.rejections.shape == (6, 3)
        assert set(res.rejection_rates) == {0.10, 0.05, 0.01}
        res2 = run_size_power(cfg, "known-factors", draws=150)
        np.testing.assert_array_equal(res.statistics, res2.statistics)

    def test_size_power_parallel_matches_serial(self):
        cfg = SimulationConfig(T=80, n=10, replications=6, seed=12)
        serial = run_size_power(cfg, "known-r", draws=150, threads=1)
        parallel = run_size_power(cfg, "known-r", draws=150, threads=2)
        np.testing.assert_array_equal(serial.statistics, parallel.statistics)
        np.testing.assert_array_equal(serial.rejections, parallel.rejections)

    def test_power_exceeds_size(self):
        null_cfg = SimulationConfig(T=200, n=12, replications=8, seed=13)
        alt_cfg = power_config(null_cfg)
        size = run_size_power(null_cfg, "known-factors", draws=200).rejection_rates[0.10]
        power = run_size_power(alt_cfg, "known-factors", draws=200).rejection_rates[0.10]
        assert power == 1.0
        assert power > size

    def test_factor_selection_on_strong_factors(self):
        cfg = SimulationConfig(T=150, n=40, replications=5, seed=14)
        chosen = run_factor_selection(cfg, "er")
        assert np.all(chosen == 3)

    def test_info_gains_ordering(self):
        cfg = SimulationConfig(T=250, n=25, phi=0.5, theta=(0.8, 0.9, -0.7, 0.5),
                               replications=3, seed=15)
        res = run_info_gains(cfg, folds=5, factor_rule="fixed", fixed_r=3)
        assert res.mean_mse["farmpredict"] < res.mean_mse["pcr"]
        assert all(len(v) == 3 for v in res.mse.values())

    def test_info_gains_fold_validation(self):
        cfg = SimulationConfig(T=8, n=6, replications=1, seed=16)
        with pytest.raises(ValueError):
            run_info_gains(cfg, folds=5)
