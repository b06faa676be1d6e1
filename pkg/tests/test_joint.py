import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from jointcount.copulas import FAMILY_CODES, copula_cdf, get_copula
from jointcount.errors import DomainError, NumericError, StructuralError
from jointcount.joint import (
    CoefBlock,
    ModelData,
    PenaltyConfig,
    build_penalty,
    gradient_and_hessian,
    joint_pmf,
    joint_pmf_direct,
    log_likelihood,
    obs_loglik,
    penalized_objective,
)
from jointcount.margins import poisson_cdf, poisson_pmf

from conftest import fd_gradient, plausible_points, simulate_model_data, typical_theta


@pytest.mark.parametrize("family", FAMILY_CODES)
def test_rectangle_matches_direct_differencing(family):
    theta = typical_theta(family, 0.5)
    y = np.arange(0, 8)
    for lam1, lam2 in ((0.4, 2.2), (1.7, 1.1)):
        fast = joint_pmf(family, theta, lam1, lam2, y[:, None], y[None, :])
        for a in y:
            for b in y:
                assert fast[a, b] == pytest.approx(joint_pmf_direct(family, theta, lam1, lam2, a, b), abs=1e-12)


def test_zero_count_edge_uses_zero_lower_cdf():
    # y1 = 0: the lower corner cdf is exactly 0, so the mass is C(F1(0), F2(y)) - C(F1(0), F2(y - 1))
    lam1, lam2, theta = 1.3, 0.8, 0.4
    F10 = float(poisson_cdf(lam1, 0))
    for y2 in range(4):
        ref = copula_cdf("N", theta, F10, poisson_cdf(lam2, y2)) - (
            copula_cdf("N", theta, F10, poisson_cdf(lam2, y2 - 1)) if y2 > 0 else 0.0)
        assert joint_pmf("N", theta, lam1, lam2, 0, y2) == pytest.approx(ref, abs=1e-15)
    assert joint_pmf("C0", 2.0, lam1, lam2, 0, 0) == pytest.approx(
        copula_cdf("C0", 2.0, F10, poisson_cdf(lam2, 0)), abs=1e-16)


@pytest.mark.parametrize("family", FAMILY_CODES)
def test_grid_mass_and_margins(family):
    theta = typical_theta(family, 0.6)
    y = np.arange(0, 61)
    P = joint_pmf(family, theta, 2.9, 0.7, y[:, None], y[None, :])
    assert 1 - 1e-8 <= math.fsum(P.ravel().tolist()) <= 1 + 1e-10
    assert np.allclose(P.sum(axis=1), poisson_pmf(2.9, y), atol=1e-12)
    assert np.allclose(P.sum(axis=0), poisson_pmf(0.7, y), atol=1e-12)


def test_independence_is_product():
    y = np.arange(0, 10)
    P = joint_pmf("indep", 0.0, 1.2, 2.1, y[:, None], y[None, :])
    assert np.allclose(P, stats.poisson.pmf(y, 1.2)[:, None] * stats.poisson.pmf(y, 2.1)[None, :], rtol=1e-13)


@settings(max_examples=80, deadline=None)
@given(family=st.sampled_from(FAMILY_CODES), lam1=st.floats(0.05, 4.0), lam2=st.floats(0.05, 4.0),
       y1=st.integers(0, 12), y2=st.integers(0, 12), s=st.floats(0.05, 0.9))
def test_property_pmf_in_unit_interval(family, lam1, lam2, y1, y2, s):
    p = joint_pmf(family, typical_theta(family, s), lam1, lam2, y1, y2)
    assert 0.0 <= p <= 1.0


def test_errors():
    with pytest.raises(StructuralError):
        joint_pmf("N", 0.2, 1.0, 1.0, -1, 0)
    with pytest.raises(DomainError):
        joint_pmf("C0", -1.0, 1.0, 1.0, 0, 0)
    with pytest.raises(DomainError):
        joint_pmf("N", 0.2, 0.0, 1.0, 0, 0)


def test_log_likelihood_is_sum_of_log_pmf():
    data = simulate_model_data("F", n=40, seed=3)
    beta = np.array([0.4, 0.1, -0.1, 0.0, 0.2, -0.2, 0.1, 0.4, 2.0])
    lam1 = np.exp(data.X1 @ beta[:4])
    lam2 = np.exp(data.X2 @ beta[4:8])
    ref = sum(math.log(joint_pmf("F", 2.0, lam1[i], lam2[i], data.y1[i], data.y2[i])) for i in range(data.n))
    assert log_likelihood(beta, data, "F") == pytest.approx(ref, rel=1e-13)
    assert obs_loglik(beta, data, "F").shape == (40,)
    with pytest.raises(StructuralError):
        log_likelihood(beta[:-1], data, "F")


@pytest.mark.parametrize("family", ["N", "F", "C0", "J90", "G180", "PL", "indep"])
def test_gradient_and_hessian_against_differences(family):
    data = simulate_model_data(family, n=120, seed=11)
    p = build_penalty(3, PenaltyConfig(5.0, [0.3, 1.0, 0.2, 0.7]), with_theta=get_copula(family).n_params == 1)
    fun = lambda b: penalized_objective(b, data, family, p)
    for x in plausible_points(family, data, 3, seed=5):
        g, H = gradient_and_hessian(x, data, family, p)
        g_fd = fd_gradient(fun, x)
        assert np.max(np.abs(g - g_fd)) <= 1e-5 * max(1.0, np.max(np.abs(g)))
        H_fd = np.column_stack([fd_gradient(lambda b, j=j: gradient_and_hessian(b, data, family, p)[0][j], x)
                                for j in range(x.size)])
        assert np.max(np.abs(H - H_fd)) <= 1e-4 * max(1.0, np.max(np.abs(H)))
        assert np.allclose(H, H.T, atol=1e-12)


class TestPenalty:
    def test_structure(self):
        w = np.array([0.5, 2.0, 0.0])
        S = build_penalty(2, PenaltyConfig(10.0, w, 1e-8), with_theta=True)
        assert S.shape == (7, 7)
        assert np.array_equal(S, S.T)
        assert np.all(S[-1] == 0) and np.all(S[:, -1] == 0)
        assert S[2, 2] == pytest.approx(10.0 * 1e-8)
        assert np.min(np.linalg.eigvalsh(S)) >= -1e-12

    def test_quadratic_form_is_weighted_squared_differences(self):
        rng = np.random.default_rng(1)
        w = rng.uniform(0.1, 2.0, 4)
        S = build_penalty(3, PenaltyConfig(3.0, w), with_theta=False)
        b1, b2 = rng.normal(size=4), rng.normal(size=4)
        x = np.concatenate([b1, b2])
        assert x @ S @ x == pytest.approx(3.0 * np.sum(w * (b1 - b2) ** 2), rel=1e-13)
        assert np.allclose(S @ np.concatenate([b1, b1]), 0.0)

    def test_bad_inputs(self):
        with pytest.raises(StructuralError):
            build_penalty(2, PenaltyConfig(1.0, [1.0, 1.0]))
        with pytest.raises(StructuralError):
            PenaltyConfig(-1.0, [1.0])


class TestContainers:
    def test_model_data_row_mismatch(self):
        with pytest.raises(StructuralError):
            ModelData([1, 2], [1], np.ones((2, 1)), np.ones((2, 1)))

    def test_coef_block_round_trip(self):
        vec = np.arange(7.0)
        cb = CoefBlock.from_vector(vec, 3, 3, True, ("a", "b", "c"), ("a", "b", "c"))
        assert np.array_equal(cb.to_vector(), vec)
        assert cb.k == 7 and cb.index_map["theta:(Intercept)"] == 6 and cb.index_map["eq2:b"] == 4
        with pytest.raises(StructuralError):
            CoefBlock.from_vector(vec, 3, 3, False)

    def test_subset(self):
        d = simulate_model_data("N", n=30, seed=0)
        s = d.subset(np.arange(5))
        assert s.n == 5 and np.array_equal(s.y1, d.y1[:5])


def test_extreme_rates_stay_finite_or_raise_named_error():
    data = simulate_model_data("N", n=30, seed=2)
    beta = np.concatenate([[8.0, 0, 0, 0], [0.1, 0, 0, 0], [0.2]])
    try:
        val = log_likelihood(beta, data, "N")
        assert math.isfinite(val)
    except NumericError as exc:
        assert "observation" in str(exc)
