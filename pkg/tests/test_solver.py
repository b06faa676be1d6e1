import math

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st

from jointcount.errors import ConfigError, DataError, StructuralError
from jointcount.joint import ModelData, log_likelihood
from jointcount.solver import (
    SolverOptions,
    dogleg_step,
    fit,
    fit_penalized,
    poisson_glm,
    trust_region_maximize,
)

from conftest import simulate_model_data

EQUAL = (0.25, 0.2, -0.35, 0.0)


def _glm(X, y):
    return sm.GLM(y, X, family=sm.families.Poisson()).fit(tol=1e-13).params


class TestDogleg:
    def test_newton_step_inside_region(self):
        B = np.array([[2.0, 0.3], [0.3, 1.0]])
        g = np.array([0.1, -0.2])
        assert np.allclose(dogleg_step(g, B, 10.0), np.linalg.solve(B, g), rtol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), radius=st.floats(1e-3, 2.0))
    def test_step_respects_radius_and_improves_model(self, seed, radius):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4))
        B = A @ A.T + 0.1 * np.eye(4)
        g = rng.normal(size=4)
        p = dogleg_step(g, B, radius)
        assert np.linalg.norm(p) <= radius * (1 + 1e-12)
        assert g @ p - 0.5 * p @ B @ p > 0

    def test_indefinite_hessian_is_regularised(self):
        B = np.array([[1.0, 0.0], [0.0, -2.0]])
        g = np.array([1.0, 1.0])
        p = dogleg_step(g, B, 0.5)
        assert np.linalg.norm(p) <= 0.5 + 1e-12 and g @ p > 0


def test_trust_region_on_concave_function():
    c = np.array([1.0, -2.0, 0.5])

    def fun(x):
        return -np.sum(np.cosh(x - c))

    def derivs(x):
        return -np.sinh(x - c), -np.diag(np.cosh(x - c))

    st_ = trust_region_maximize(fun, derivs, np.array([5.0, 5.0, -5.0]), SolverOptions())
    assert st_.converged
    assert np.allclose(st_.x, c, atol=1e-8)
    assert all(b >= a for a, b in zip(st_.history, st_.history[1:]))


class TestFit:
    def test_independence_matches_two_poisson_regressions(self):
        data = simulate_model_data("indep", n=250, seed=7)
        res = fit("indep", data)
        assert res.converged
        assert np.max(np.abs(res.beta_hat.beta1 - _glm(data.X1, data.y1))) <= 1e-8
        assert np.max(np.abs(res.beta_hat.beta2 - _glm(data.X2, data.y2))) <= 1e-8

    def test_glm_newton_against_statsmodels(self):
        data = simulate_model_data("N", n=200, seed=1)
        assert np.allclose(poisson_glm(data.X1, data.y1), _glm(data.X1, data.y1), atol=1e-10)

    @pytest.mark.parametrize("family", ["N", "T", "F", "C0", "C90", "G0", "J0", "J270", "FGM", "AMH", "PL"])
    def test_fit_reaches_stationary_point(self, family):
        data = simulate_model_data(family, n=250, seed=3)
        res = fit(family, data)
        assert res.converged
        assert res.aic == pytest.approx(-2 * res.loglik + 2 * res.k, rel=1e-15)
        assert res.loglik == pytest.approx(log_likelihood(res.beta_hat, data, family), rel=1e-14)
        assert np.all(res.std_errors > 0)
        # no nearby point is better
        x = res.beta_hat.to_vector()
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert log_likelihood(x + 1e-3 * rng.standard_normal(x.size), data, family) <= res.loglik + 1e-9

    def test_warm_start_needs_no_iterations(self):
        data = simulate_model_data("F", n=150, seed=4)
        first = fit("F", data)
        again = fit("F", data, start=first)
        assert again.n_inner == 0 and again.converged

    def test_one_sided_family_on_opposite_dependence(self):
        data = simulate_model_data("N", n=250, seed=9, tau=-0.6)
        res = fit("C0", data)
        ind = fit("indep", data)
        assert res.effectively_independent
        assert abs(res.tau_hat) < 1e-4
        assert res.loglik == pytest.approx(ind.loglik, abs=1e-6)

    def test_tau_recovered(self):
        data = simulate_model_data("G0", n=250, seed=2, tau=0.5)
        assert fit("G0", data).tau_hat == pytest.approx(0.5, abs=0.08)


class TestFitErrors:
    def test_rank_deficient_design_names_columns(self):
        d = simulate_model_data("N", n=60, seed=0)
        X1 = np.column_stack([d.X1, 2 * d.X1[:, 1]])
        bad = ModelData(d.y1, d.y2, X1, d.X2, ("(Intercept)", "x1", "x2", "x3", "x1twice"), d.names2)
        with pytest.raises(StructuralError, match="x1twice"):
            fit("N", bad)

    def test_too_few_rows(self):
        d = simulate_model_data("N", n=60, seed=0).subset(np.arange(5))
        with pytest.raises(StructuralError, match="fewer"):
            fit("N", d)

    def test_all_zero_counts(self):
        d = simulate_model_data("N", n=40, seed=0)
        z = ModelData(np.zeros(40), d.y2, d.X1, d.X2)
        with pytest.raises(DataError):
            fit("N", z)

    @pytest.mark.parametrize("kw", [{"accept_ratio": 1.5}, {"shrink": 2.0}, {"initial_radius": 0.0},
                                    {"gradient_tol": 0.0}, {"max_inner_iter": 0}, {"xi": -1.0}])
    def test_bad_options(self, kw):
        with pytest.raises(ConfigError):
            SolverOptions(**kw)


class TestPenalized:
    def test_zero_xi_is_plain_fit(self):
        d = simulate_model_data("F", n=250, seed=5, beta1=EQUAL, beta2=EQUAL)
        a = fit("F", d)
        b = fit_penalized("F", d, SolverOptions(xi=0.0))
        assert np.max(np.abs(a.beta_hat.to_vector() - b.beta_hat.to_vector())) <= 1e-10

    @pytest.mark.parametrize("family", ["N", "F", "C90"])
    def test_large_xi_equalises_pairs(self, family):
        tau = -0.25 if family == "C90" else 0.25
        d = simulate_model_data(family, n=250, seed=6, beta1=EQUAL, beta2=EQUAL, tau=tau)
        res = fit_penalized(family, d, SolverOptions(xi=1e9))
        assert res.converged
        assert res.max_pair_diff <= 1e-4
        assert res.penalized_obj <= res.loglik

    def test_unequal_lengths_rejected(self):
        d = simulate_model_data("N", n=60, seed=0)
        short = ModelData(d.y1, d.y2, d.X1, d.X2[:, :3])
        with pytest.raises(StructuralError):
            fit_penalized("N", short, SolverOptions(xi=10.0))

    def test_weights_never_decrease_and_are_floored(self):
        d = simulate_model_data("N", n=200, seed=8, beta1=EQUAL, beta2=EQUAL)
        base = fit("N", d)
        res = fit_penalized("N", d, SolverOptions(xi=1e3))
        diffs = np.abs(base.beta_hat.beta1 - base.beta_hat.beta2)
        assert np.all(res.weights >= np.maximum(diffs, 1e-8) - 1e-15)
        assert res.max_pair_diff < base.max_pair_diff


def test_tau_hat_is_finite_for_all_results():
    d = simulate_model_data("AMH", n=150, seed=1, tau=0.2)
    for fam in ("AMH", "FGM", "PL"):
        assert math.isfinite(fit(fam, d).tau_hat)
