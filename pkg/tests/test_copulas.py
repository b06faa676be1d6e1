import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from jointcount._bivariate import bvn_cdf, bvt_cdf, t3_ppf
from jointcount.copulas import (
    FAMILY_CODES,
    copula_cdf,
    get_copula,
    link_theta,
    tau_from_theta,
    tau_range,
    theta_from_tau,
    unlink_theta,
)
from jointcount.errors import DomainError, InputError, LinkError, TauRangeError

from conftest import typical_theta

mp.mp.dps = 40


def _bvn_quad(x, y, rho):
    s = math.sqrt(1 - rho * rho)
    f = lambda z: stats.norm.pdf(z) * stats.norm.cdf((y - rho * z) / s)
    return integrate.quad(f, -np.inf, x, epsabs=1e-14, epsrel=1e-13)[0]


def _bvt_quad(x, y, rho, nu=3):
    def f(z):
        scale = math.sqrt((nu + z * z) * (1 - rho * rho) / (nu + 1))
        return stats.t.pdf(z, nu) * stats.t.cdf((y - rho * z) / scale, nu + 1)

    return integrate.quad(f, -np.inf, x, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def _frank_mp(u, v, t):
    u, v, t = mp.mpf(u), mp.mpf(v), mp.mpf(t)
    return -mp.log(1 + (mp.exp(-t * u) - 1) * (mp.exp(-t * v) - 1) / (mp.exp(-t) - 1)) / t


def _joe_mp(u, v, t):
    a, b = (1 - mp.mpf(u)) ** t, (1 - mp.mpf(v)) ** t
    return 1 - (a + b - a * b) ** (1 / mp.mpf(t))


def _archimedean_tau(phi, dphi):
    return 1 + 4 * integrate.quad(lambda s: phi(s) / dphi(s), 0, 1, epsabs=1e-13, limit=200)[0]


class TestClosedForms:
    def test_independence_centre(self):
        assert copula_cdf("indep", 0.0, 0.5, 0.5) == 0.25

    def test_clayton_value_and_density_oracle(self):
        theta = 2.0
        expected = 7 ** -0.5
        assert copula_cdf("C0", theta, 0.5, 0.5) == pytest.approx(expected, abs=1e-15)

        def dens(v, u):
            return (1 + theta) * (u * v) ** (-theta - 1) * (u**-theta + v**-theta - 1) ** (-2 - 1 / theta)

        mass = integrate.dblquad(dens, 0, 0.5, 0, 0.5, epsabs=1e-11)[0]
        assert mass == pytest.approx(expected, abs=1e-8)

    @pytest.mark.parametrize("u,v,t", [(0.3, 0.7, 0.5), (0.999, 0.998, 30.0), (1e-6, 0.4, 12.0),
                                       (0.2, 0.9, -8.0), (0.6, 0.6, 1e-3), (0.9999, 0.5, -34.0)])
    def test_frank_high_precision(self, u, v, t):
        assert copula_cdf("F", t, u, v) == pytest.approx(float(_frank_mp(u, v, t)), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("u,v,t", [(0.3, 0.7, 1.5), (0.999, 0.999, 6.0), (0.05, 0.1, 3.0), (0.9, 0.2, 1.01)])
    def test_joe_high_precision(self, u, v, t):
        assert copula_cdf("J0", t, u, v) == pytest.approx(float(_joe_mp(u, v, t)), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("x,y,rho", [(0.3, -0.5, 0.4), (-2.0, -1.5, -0.8), (1.2, 2.5, 0.95), (0.0, 0.0, 0.1)])
    def test_bivariate_normal_against_quadrature(self, x, y, rho):
        assert float(bvn_cdf(x, y, rho)) == pytest.approx(_bvn_quad(x, y, rho), abs=1e-12)

    @pytest.mark.parametrize("x,y,rho", [(0.3, -0.5, 0.4), (-2.0, -1.5, -0.8), (1.2, 2.5, 0.9), (-4.0, 3.0, 0.3)])
    def test_bivariate_t_against_quadrature(self, x, y, rho):
        assert float(bvt_cdf(x, y, rho, 3)) == pytest.approx(_bvt_quad(x, y, rho), abs=1e-10)

    def test_gaussian_zero_correlation_is_product(self):
        assert copula_cdf("N", 0.0, 0.3, 0.6) == pytest.approx(0.18, abs=1e-14)

    @pytest.mark.parametrize("p", [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999999])
    def test_t3_quantile(self, p):
        q = float(t3_ppf(p))
        assert float(stats.t.cdf(q, 3)) == pytest.approx(p, rel=1e-13)
        assert q == pytest.approx(float(stats.t.ppf(p, 3)), rel=1e-8)


class TestTau:
    def test_frank_debye_oracle(self):
        for theta in (0.904, 3.0, -5.0, 20.0):
            d1 = integrate.quad(lambda t: t / math.expm1(t), 0, abs(theta))[0] / abs(theta)
            tau = 1 - 4 / abs(theta) * (1 - d1)
            assert tau_from_theta("F", theta) == pytest.approx(math.copysign(tau, theta), abs=1e-12)

    def test_joe_series_against_generator_integral(self):
        for theta in (1.2, 2.0, 5.0):
            phi = lambda s, th=theta: -math.log1p(-((1 - s) ** th))
            dphi = lambda s, th=theta: -th * (1 - s) ** (th - 1) / (1 - (1 - s) ** th)
            assert tau_from_theta("J0", theta) == pytest.approx(_archimedean_tau(phi, dphi), abs=1e-9)

    def test_amh_against_generator_integral(self):
        for theta in (-0.9, 0.3, 0.95):
            phi = lambda s, th=theta: math.log((1 - th * (1 - s)) / s)
            dphi = lambda s, th=theta: th / (1 - th * (1 - s)) - 1 / s
            assert tau_from_theta("AMH", theta) == pytest.approx(_archimedean_tau(phi, dphi), abs=1e-9)

    def test_plackett_against_dblquad(self):
        theta = 4.0
        from jointcount.copulas import _plackett_parts

        def integrand(v, u):
            s, r = _plackett_parts(u, v, theta)
            cu = 0.5 * (1 - (s - 2 * theta * v) / r)
            cv = 0.5 * (1 - (s - 2 * theta * u) / r)
            return cu * cv

        ref = 1 - 4 * integrate.dblquad(integrand, 0, 1, 0, 1, epsabs=1e-10)[0]
        assert tau_from_theta("PL", theta) == pytest.approx(ref, abs=1e-4)

    @pytest.mark.parametrize("code", ["G0", "C0"])
    def test_analytic_inverse(self, code):
        assert theta_from_tau(code, 0.5) == 2.0

    def test_gaussian_zero(self):
        assert theta_from_tau("N", 0.0) == 0.0

    @pytest.mark.parametrize("code", [c for c in FAMILY_CODES if c != "indep"])
    def test_strictly_increasing(self, code):
        spec = get_copula(code)
        rng = tau_range(spec)
        lo, hi = rng.lower, rng.upper
        taus = np.linspace(lo + 0.02 * (hi - lo), hi - 0.02 * (hi - lo), 25)
        thetas = [theta_from_tau(spec, t) for t in taus]
        assert all(b > a for a, b in zip(thetas, thetas[1:]))
        back = [tau_from_theta(spec, th) for th in thetas]
        assert all(b > a for a, b in zip(back, back[1:]))

    @pytest.mark.parametrize("letter", ["C", "G", "J"])
    def test_rotation_consistency(self, letter):
        base = typical_theta(f"{letter}0")
        assert tau_from_theta(f"{letter}90", -base) == pytest.approx(-tau_from_theta(f"{letter}0", base), abs=1e-14)
        assert tau_from_theta(f"{letter}270", -base) == pytest.approx(-tau_from_theta(f"{letter}0", base), abs=1e-14)
        assert tau_from_theta(f"{letter}180", base) == pytest.approx(tau_from_theta(f"{letter}0", base), abs=1e-14)

    def test_ranges(self):
        r = tau_range("C90")
        assert (r.lower, r.upper) == (-1.0, 0.0) and not r.lower_closed and not r.upper_closed
        f = tau_range("FGM")
        assert (f.lower, f.upper, f.lower_closed, f.upper_closed) == (-2 / 9, 2 / 9, True, True)
        i = tau_range("indep")
        assert 0.0 in i and 1e-9 not in i

    def test_out_of_range_names_interval(self):
        with pytest.raises(TauRangeError, match=r"C90.*\(-1, 0\)|\(-1, 0\).*C90"):
            theta_from_tau("C90", 0.3)
        with pytest.raises(TauRangeError):
            theta_from_tau("FGM", 0.5)


class TestLinks:
    @pytest.mark.parametrize("code,eta,theta", [("N", 0.0, 0.0), ("C0", 0.0, 1.0), ("G0", 0.0, 2.0)])
    def test_examples(self, code, eta, theta):
        assert link_theta(code, eta) == theta
        assert unlink_theta(code, theta) == eta

    @pytest.mark.parametrize("code", FAMILY_CODES)
    def test_round_trip(self, code):
        if code == "indep":
            return
        etas = np.linspace(-3, 3, 13)
        assert np.allclose(unlink_theta(code, link_theta(code, etas)), etas, atol=1e-10)
        th = link_theta(code, etas)
        spec = get_copula(code)
        if spec.base != "frank":
            assert all(t in spec.theta_domain for t in th)

    @pytest.mark.parametrize("code,theta", [("N", 1.0), ("C0", 0.0), ("G0", 1.0), ("C90", 0.0), ("J270", -1.0)])
    def test_boundary_rejected(self, code, theta):
        with pytest.raises(LinkError):
            unlink_theta(code, theta)


class TestErrors:
    def test_unknown_family_lists_codes(self):
        with pytest.raises(DomainError) as exc:
            get_copula("Q")
        for code in FAMILY_CODES:
            assert code in str(exc.value)

    @pytest.mark.parametrize("code,theta", [("C0", -0.5), ("N", 1.5), ("G0", 0.5), ("C90", 1.0), ("AMH", 1.0),
                                            ("FGM", 1.01), ("PL", 0.0)])
    def test_theta_outside_domain(self, code, theta):
        with pytest.raises(DomainError):
            copula_cdf(code, theta, 0.5, 0.5)

    def test_nan_inputs(self):
        with pytest.raises(InputError):
            copula_cdf("N", 0.3, float("nan"), 0.5)
        with pytest.raises(InputError):
            copula_cdf("N", float("nan"), 0.5, 0.5)

    def test_frank_cap_warns(self):
        with pytest.warns(RuntimeWarning, match="capped"):
            copula_cdf("F", 80.0, 0.4, 0.4)


@pytest.mark.parametrize("theta", [1e-6, -1e-6, 1e-9])
def test_frank_limit_at_zero(theta):
    u = np.linspace(0.01, 0.99, 50)[:, None]
    v = u.T
    c = copula_cdf("F", theta, u, v)
    # exact gap to uv is theta/2 * uv(1-u)(1-v) + O(theta^2): at most |theta|/32
    assert np.max(np.abs(c - u * v)) <= abs(theta) / 32 + 1e-15
    assert np.max(np.abs(c - u * v * (1 + 0.5 * theta * (1 - u) * (1 - v)))) <= 1e-14


unit = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(code=st.sampled_from(FAMILY_CODES), u1=unit, u2=unit, v1=unit, v2=unit,
       s=st.floats(0.05, 0.95))
def test_property_rectangle_nonnegative_and_frechet_bounds(code, u1, u2, v1, v2, s):
    spec = get_copula(code)
    theta = 0.0 if spec.is_independence else typical_theta(code, 0.9 * s)
    ua, ub = sorted((u1, u2))
    va, vb = sorted((v1, v2))
    c = copula_cdf(spec, theta, np.array([ub, ua, ub, ua]), np.array([vb, vb, va, va]))
    assert c[0] - c[1] - c[2] + c[3] >= -1e-10
    assert max(ub + vb - 1, 0) - 1e-12 <= c[0] <= min(ub, vb) + 1e-12
