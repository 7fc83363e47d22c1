import numpy as np
import pytest
from scipy.integrate import solve_ivp

from randlegendre.distributions import DiscreteFinite, HypothesisError, multinormal, sample
from randlegendre.moments import moment_table
from randlegendre.ode import StepSizeError, integrate_batch, ode_solve
from randlegendre.oracles import mc_estimate, mc_ode_estimate, summarize
from randlegendre.series import Realization, eval_truncated

import published as P


def random_realizations(n=50, seed=2024):
    rng = np.random.default_rng(seed)
    return [
        Realization(float(a), float(x0), float(x1))
        for a, x0, x1 in zip(rng.uniform(0, 14, n), rng.uniform(-10, 10, n), rng.uniform(-10, 10, n))
    ]


def scipy_reference(r, t_end):
    lam = r.a * (r.a + 1)
    sol = solve_ivp(
        lambda t, y: [y[1], (2 * t * y[1] - lam * y[0]) / (1 - t * t)],
        (0.0, t_end), [r.x0, r.x1], method="DOP853", rtol=1e-13, atol=1e-13,
    )
    return sol.y[0, -1]


class TestOdeSolve:
    def test_legendre_p2(self):
        assert ode_solve(Realization(2, -0.5, 0), 0.5) == pytest.approx(-0.125, abs=1e-9)

    def test_origin(self):
        assert ode_solve(Realization(3.3, 0.7, -2.0), 0.0) == 0.7

    def test_matches_series(self):
        r = Realization(5.5, 1, 0)
        assert ode_solve(r, 0.7) == pytest.approx(eval_truncated(r, 0.7, 120), abs=1e-8)

    @pytest.mark.parametrize("t_end", [-0.9, -0.4, 0.25, 0.95])
    def test_matches_scipy(self, t_end):
        for r in random_realizations(8, seed=7):
            assert ode_solve(r, t_end) == pytest.approx(scipy_reference(r, t_end), rel=1e-8, abs=1e-8)

    def test_batch_output_order(self):
        rs = random_realizations(5, seed=3)
        ts = [0.9, -0.3, 0.0, 0.3, -0.8]
        out = integrate_batch([r.a for r in rs], [r.x0 for r in rs], [r.x1 for r in rs], ts)
        for i, r in enumerate(rs):
            for j, t in enumerate(ts):
                assert out[i, j] == pytest.approx(ode_solve(r, t), rel=1e-8, abs=1e-8)

    @pytest.mark.parametrize("t", [0.96, -1.0])
    def test_guard(self, t):
        with pytest.raises(ValueError):
            ode_solve(Realization(1, 1, 1), t)

    def test_step_budget(self):
        with pytest.raises(StepSizeError) as info:
            integrate_batch([5.0], [1.0], [0.0], [0.9], max_steps=3)
        assert 0 <= info.value.t_reached < 0.9


class TestSeriesAgainstOde:
    @pytest.mark.parametrize("t", [0.3, 0.6])
    def test_order_120(self, t):
        for r in random_realizations():
            assert abs(eval_truncated(r, t, 120) - ode_solve(r, t)) < 1e-7

    @pytest.mark.xfail(
        strict=True,
        reason="order-120 truncation error at t=0.9 reaches ~5e-6 for a near 14 and |x| near 10",
    )
    def test_order_120_near_edge(self):
        for r in random_realizations():
            assert abs(eval_truncated(r, 0.9, 120) - ode_solve(r, 0.9)) < 1e-7

    def test_converged_order_near_edge(self):
        for r in random_realizations():
            assert abs(eval_truncated(r, 0.9, 600) - ode_solve(r, 0.9)) < 1e-7


class TestMonteCarlo:
    def test_summarize(self):
        vals = np.array([[1.0], [2.0], [3.0], [6.0]])
        mean, var, se_mean, se_var = summarize(vals)
        assert mean[0] == 3.0 and var[0] == pytest.approx(14 / 3)
        assert se_mean[0] == pytest.approx(np.sqrt(14 / 3 / 4))
        m2, m4 = 14 / 4, (16 + 1 + 0 + 81) / 4
        assert se_var[0] == pytest.approx(np.sqrt((m4 - m2**2) / 4))

    def test_single_atom(self):
        model = DiscreteFinite([[2.0, -0.5, 0.0, 1.0]])
        rep = mc_estimate(model, [0.0, 0.5], 1000, seed=1)
        assert rep.mean == pytest.approx([-0.5, -0.125], abs=1e-15)
        assert np.all(rep.se_mean == 0) and np.all(rep.variance == 0)

    def test_single_atom_ode_is_exact_polynomial(self):
        model = DiscreteFinite([[3.0, 0.0, -1.5, 1.0]])
        rep = mc_ode_estimate(model, [0.5, -0.9], 100, seed=1)
        p3 = lambda t: (5 * t**3 - 3 * t) / 2  # noqa: E731
        assert rep.mean == pytest.approx([p3(0.5), p3(-0.9)], abs=1e-9)
        assert rep.evaluator == "ode" and np.all(rep.se_mean < 1e-15)

    def test_origin_is_sample_mean(self, dirichlet_model):
        rep = mc_estimate(dirichlet_model, [0.0], 5000, seed=9)
        assert rep.mean[0] == pytest.approx(sample(dirichlet_model, 5000, 9).x0.mean(), rel=1e-14)

    def test_deterministic(self, gaussian_model):
        a = mc_estimate(gaussian_model, P.T_GRID, 5000, seed=4)
        b = mc_estimate(gaussian_model, P.T_GRID, 5000, seed=4)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)
        assert a.generator == "numpy.random.Philox"

    def test_worker_count_does_not_matter(self, dirichlet_model):
        a = mc_estimate(dirichlet_model, P.T_GRID, 100_000, seed=4, workers=1)
        b = mc_estimate(dirichlet_model, P.T_GRID, 100_000, seed=4, workers=4)
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.se_variance, b.se_variance)

    def test_series_and_ode_evaluators_agree(self, dirichlet_model):
        a = mc_estimate(dirichlet_model, P.T_GRID, 20_000, seed=5)
        b = mc_ode_estimate(dirichlet_model, P.T_GRID, 20_000, seed=5)
        assert np.max(np.abs(a.mean - b.mean)) < 1e-6
        assert np.max(np.abs(a.variance - b.variance)) < 1e-6

    def test_ode_guard(self, dirichlet_model):
        with pytest.raises(ValueError):
            mc_ode_estimate(dirichlet_model, [0.97], 10)

    def test_unbounded_refused(self):
        model = multinormal(P.GAUSSIAN_MU, P.GAUSSIAN_SIGMA)
        with pytest.raises(HypothesisError):
            mc_estimate(model, [0.5], 100)
        assert mc_estimate(model, [0.5], 100, override_unbounded=True).n == 100

    @pytest.mark.slow
    def test_dirichlet_edge_mean(self, dirichlet_model):
        rep = mc_estimate(dirichlet_model, [0.9], 500_000, seed=1)
        assert abs(rep.mean[0] - 0.281863) < 3 * rep.se_mean[0]

    @pytest.mark.slow
    def test_multinomial_edge_variance(self, multinomial_model):
        rep = mc_estimate(multinomial_model, [0.9], 500_000, seed=2)
        assert abs(rep.variance[0] - 31.6569) < 3 * rep.se_variance[0]

    @pytest.mark.slow
    def test_multinomial_ode_mean(self, multinomial_model):
        rep = mc_ode_estimate(multinomial_model, [0.5], 500_000, seed=2)
        assert abs(rep.mean[0] - 2.97259) < 3 * rep.se_mean[0]

    @pytest.mark.slow
    def test_engine_within_standard_errors(self, gaussian_model):
        rep = mc_estimate(gaussian_model, P.T_GRID, 500_000, seed=3)
        table = moment_table(gaussian_model, P.T_GRID, [80])
        for i, t in enumerate(P.T_GRID):
            assert abs(table.cell(t, 80).mean - rep.mean[i]) < 4 * rep.se_mean[i]
            assert abs(table.cell(t, 80).variance - rep.variance[i]) < 4 * rep.se_variance[i]
