"""One-parameter bivariate copulas: distribution functions, Kendall's tau and links.

Families are addressed by short string codes: ``N`` (Gaussian), ``T``
(Student-t with 3 degrees of freedom), ``C``/``G``/``J`` (Clayton, Gumbel,
Joe) with rotation suffixes ``0``, ``90``, ``180``, ``270``, ``F`` (Frank),
``FGM`` (Farlie-Gumbel-Morgenstern), ``AMH`` (Ali-Mikhail-Haq), ``PL``
(Plackett) and ``indep``.

Rotations follow the convention that 90 and 270 degree versions carry a
negative parameter whose absolute value is the base parameter::

    C90(u, v)  = v - C(1 - u, v; -theta)
    C180(u, v) = u + v - 1 + C(1 - u, 1 - v; theta)
    C270(u, v) = u - C(u, 1 - v; -theta)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.special import ndtri, spence

from jointcount._bivariate import bvn_cdf, bvt_cdf, t3_ppf
from jointcount.errors import DomainError, InputError, LinkError, NumericError, TauRangeError

T_DF = 3
FRANK_CAP = 35.0
UV_CLAMP = 1e-12


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    lower_closed: bool = False
    upper_closed: bool = False

    def __contains__(self, x) -> bool:
        lo_ok = x >= self.lower if self.lower_closed else x > self.lower
        hi_ok = x <= self.upper if self.upper_closed else x < self.upper
        return bool(lo_ok and hi_ok)

    def __str__(self) -> str:
        lb = "[" if self.lower_closed else "("
        rb = "]" if self.upper_closed else ")"
        return f"{lb}{self.lower:.6g}, {self.upper:.6g}{rb}"


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family with a fixed rotation.

    Attributes
    ----------
    code : str
        Family code as used in model files and on the command line.
    base : str
        Unrotated family name (``clayton``, ``gumbel``, ...).
    rotation : int
        0, 90, 180 or 270.
    theta_domain : Interval
        Admissible copula parameter values.
    link : str
        Name of the map from the unconstrained predictor to ``theta``.
    """

    code: str
    base: str
    rotation: int
    theta_domain: Interval
    link: str

    @property
    def is_independence(self) -> bool:
        return self.base == "indep"

    @property
    def n_params(self) -> int:
        return 0 if self.is_independence else 1

    @property
    def tau_range(self) -> Interval:
        return tau_range(self)

    @property
    def one_sided(self) -> bool:
        """True for families that only reach one sign of Kendall's tau."""
        return self.base in ("clayton", "gumbel", "joe")


_INF = math.inf
_POS = Interval(0.0, _INF)
_NEG = Interval(-_INF, 0.0)
_ABOVE1 = Interval(1.0, _INF)
_BELOW1 = Interval(-_INF, -1.0)
_UNIT = Interval(-1.0, 1.0)


def _build_registry():
    reg = {
        "N": CopulaSpec("N", "normal", 0, _UNIT, "tanh"),
        "T": CopulaSpec("T", "student", 0, _UNIT, "tanh"),
        "F": CopulaSpec("F", "frank", 0, Interval(-_INF, _INF), "identity"),
        "FGM": CopulaSpec("FGM", "fgm", 0, Interval(-1.0, 1.0, True, True), "tanh"),
        "AMH": CopulaSpec("AMH", "amh", 0, Interval(-1.0, 1.0, True, False), "tanh"),
        "PL": CopulaSpec("PL", "plackett", 0, _POS, "exp"),
        "indep": CopulaSpec("indep", "indep", 0, Interval(0.0, 0.0, True, True), "none"),
    }
    for letter, base, pos, neg, plink, nlink in (
        ("C", "clayton", _POS, _NEG, "exp", "negexp"),
        ("G", "gumbel", _ABOVE1, _BELOW1, "oneplusexp", "negoneminusexp"),
        ("J", "joe", _ABOVE1, _BELOW1, "oneplusexp", "negoneminusexp"),
    ):
        for rot in (0, 90, 180, 270):
            dom, link = (neg, nlink) if rot in (90, 270) else (pos, plink)
            code = f"{letter}{rot}"
            reg[code] = CopulaSpec(code, base, rot, dom, link)
    return reg


FAMILIES = _build_registry()
FAMILY_CODES = (
    "N", "T", "C0", "C90", "C180", "C270", "G0", "G90", "G180", "G270",
    "J0", "J90", "J180", "J270", "F", "FGM", "AMH", "PL", "indep",
)
_ALIASES = {"T3": "T", "INDEP": "indep", "INDEPENDENCE": "indep", "I": "indep"}


def get_copula(family) -> CopulaSpec:
    """Look up a family by code; ``CopulaSpec`` instances pass through."""
    if isinstance(family, CopulaSpec):
        return family
    code = str(family).strip()
    code = _ALIASES.get(code.upper(), code)
    if code not in FAMILIES:
        code = code.upper()
    if code not in FAMILIES:
        raise DomainError(
            f"unknown copula family {family!r}; valid codes: {', '.join(FAMILY_CODES)}"
        )
    return FAMILIES[code]


# ---------------------------------------------------------------------------
# base copula distribution functions (parameter on the unrotated scale)


def _cdf_indep(u, v, theta):
    return u * v


def _radial(fn, u, v, theta):
    # radially symmetric families: evaluate the upper corner through
    # C(u, v) = u + v - 1 + C(1 - u, 1 - v), which keeps the small part accurate
    flip = u + v > 1.0
    uu = np.where(flip, 1.0 - u, u)
    vv = np.where(flip, 1.0 - v, v)
    c = fn(uu, vv, theta)
    return np.where(flip, (u + v - 1.0) + c, c)


def _cdf_normal(u, v, theta):
    return _radial(lambda a, b, t: bvn_cdf(ndtri(a), ndtri(b), t), u, v, theta)


def _cdf_student(u, v, theta):
    return _radial(lambda a, b, t: bvt_cdf(t3_ppf(a), t3_ppf(b), t, T_DF), u, v, theta)


def _cdf_clayton(u, v, theta):
    theta = np.maximum(theta, 1e-12)
    s = np.expm1(-theta * np.log(u)) + np.expm1(-theta * np.log(v))
    return np.exp(-np.log1p(s) / theta)


def _cdf_gumbel(u, v, theta):
    a = (-np.log(u)) ** theta + (-np.log(v)) ** theta
    return np.exp(-(a ** (1.0 / theta)))


def _cdf_joe(u, v, theta):
    # 1 - (ubar^t + vbar^t - ubar^t vbar^t)^(1/t), written via expm1/log1p
    la = theta * np.log1p(-u)
    lb = theta * np.log1p(-v)
    a = -np.expm1(la)
    b = -np.expm1(lb)
    ab = a * b
    # near the upper corner 1 - ab cancels; sum the positive terms instead
    logw = np.where(ab > 0.5, np.log(np.exp(la) + np.exp(lb) * a), np.log1p(-np.minimum(ab, 0.5)))
    return -np.expm1(logw / theta)


def _cdf_frank(u, v, theta):
    theta = np.asarray(theta, dtype=float)
    capped = np.clip(theta, -FRANK_CAP, FRANK_CAP)
    if np.any(capped != theta):
        warnings.warn(
            f"Frank parameter capped at +/-{FRANK_CAP:g} to avoid overflow", RuntimeWarning, stacklevel=3
        )
    tiny = np.abs(capped) < 1e-100
    t = np.where(tiny, 1.0, capped)
    num = np.expm1(-t * u) * np.expm1(-t * v) / np.expm1(-t)
    direct = -np.log1p(num) / t
    # for |t| > 1, 1 + num = M / (1 - exp(-|t|)) with M a sum of positive terms;
    # negative t goes through C(u, v; t) = u - C(u, 1 - v; -t)
    a = np.abs(t)
    w = np.where(t < 0, 1.0 - v, v)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        m = np.exp(-a * u) * -np.expm1(-a * w) + np.exp(-a * w) * -np.expm1(-a * (1.0 - w))
        pos = -(np.log(m) - np.log(-np.expm1(-a))) / a
    stable = np.where(t < 0, u - pos, pos)
    direct = np.where(a > 1.0, stable, direct)
    series = u * v * (1.0 + 0.5 * capped * (1.0 - u) * (1.0 - v))
    return np.where(tiny, series, direct)


def _cdf_fgm(u, v, theta):
    return u * v * (1.0 + theta * (1.0 - u) * (1.0 - v))


def _cdf_amh(u, v, theta):
    return u * v / (1.0 - theta * (1.0 - u) * (1.0 - v))


def _plackett_parts(u, v, theta):
    t = theta - 1.0
    s = 1.0 + t * (u + v)
    r2 = 1.0 + 2.0 * t * (u + v - 2.0 * u * v) + t * t * (u - v) ** 2
    return s, np.sqrt(np.maximum(r2, 0.0))


def _cdf_plackett(u, v, theta):
    s, r = _plackett_parts(u, v, theta)
    return 2.0 * theta * u * v / (s + r)


_BASE_CDF = {
    "indep": _cdf_indep,
    "normal": _cdf_normal,
    "student": _cdf_student,
    "clayton": _cdf_clayton,
    "gumbel": _cdf_gumbel,
    "joe": _cdf_joe,
    "frank": _cdf_frank,
    "fgm": _cdf_fgm,
    "amh": _cdf_amh,
    "plackett": _cdf_plackett,
}


def _rotated(spec: CopulaSpec, u, v, theta):
    base = _BASE_CDF[spec.base]
    rot = spec.rotation
    if rot == 0:
        return base(u, v, theta)
    if rot == 90:
        return v - base(1.0 - u, v, -theta)
    if rot == 180:
        return u + v - 1.0 + base(1.0 - u, 1.0 - v, theta)
    return u - base(u, 1.0 - v, -theta)


def cdf_unchecked(spec: CopulaSpec, theta, u, v):
    """Vectorised copula cdf without parameter validation.

    Exact boundary values are returned where ``u`` or ``v`` is 0 or 1;
    interior arguments are clamped into ``[1e-12, 1 - 1e-12]``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u, v, theta = np.broadcast_arrays(u, v, theta)
    uc = np.clip(u, UV_CLAMP, 1.0 - UV_CLAMP)
    vc = np.clip(v, UV_CLAMP, 1.0 - UV_CLAMP)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c = _rotated(spec, uc, vc, theta)
    c = np.clip(c, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
    c = np.where(u >= 1.0, v, c)
    c = np.where(v >= 1.0, u, c)
    return np.where((u <= 0.0) | (v <= 0.0), 0.0, c)


def _check_theta(spec: CopulaSpec, theta) -> None:
    t = np.asarray(theta, dtype=float)
    if np.any(np.isnan(t)):
        raise InputError("copula parameter is NaN")
    if spec.base == "frank":
        if not np.all(np.isfinite(t)):
            raise DomainError("Frank parameter must be finite")
        return
    dom = spec.theta_domain
    bad = [x for x in np.atleast_1d(t).ravel() if x not in dom]
    if bad:
        raise DomainError(f"theta={bad[0]!r} outside {dom} for family {spec.code}")


def copula_cdf(family, theta, u, v):
    """Copula distribution function C(u, v; theta).

    Parameters
    ----------
    family : str or CopulaSpec
        Family code.
    theta : float or array_like
        Copula parameter on the family's own scale.
    u, v : float or array_like
        Arguments in [0, 1].

    Returns
    -------
    float or ndarray
    """
    spec = get_copula(family)
    _check_theta(spec, theta)
    ua = np.asarray(u, dtype=float)
    va = np.asarray(v, dtype=float)
    if np.any(np.isnan(ua)) or np.any(np.isnan(va)):
        raise InputError("copula arguments contain NaN")
    if np.any((ua < 0) | (ua > 1) | (va < 0) | (va > 1)):
        raise InputError("copula arguments must lie in [0, 1]")
    out = cdf_unchecked(spec, theta, ua, va)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Kendall's tau


def _debye1(x: float) -> float:
    """First Debye function D1(x) = x^-1 int_0^x t / (e^t - 1) dt, via the dilogarithm."""
    if x == 0.0:
        return 1.0
    if x < 0.0:
        return _debye1(-x) - 0.5 * x
    e = math.exp(-x)
    integral = math.pi**2 / 6.0 - float(spence(1.0 - e)) + x * math.log1p(-e)
    return integral / x


def _tau_frank(theta: float) -> float:
    if abs(theta) < 1e-2:
        t2 = theta * theta
        return theta / 9.0 - theta * t2 / 900.0 + theta * t2 * t2 / 52920.0
    return 1.0 - 4.0 / theta * (1.0 - _debye1(theta))


def _tau_joe(theta: float) -> float:
    # series truncated once a term drops below 1e-12
    kmax = int(min(1e6, math.ceil((4e12 / theta**2) ** (1.0 / 3.0)) + 2))
    k = np.arange(1, kmax + 1, dtype=float)
    terms = 1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0))
    small = np.nonzero(terms < 1e-12)[0]
    if small.size:
        terms = terms[: small[0] + 1]
    elif kmax >= 1e6:
        raise NumericError(f"Joe tau series did not converge at theta={theta}")
    # integral estimate of the dropped tail, whose terms behave like 1 / (theta^2 k^3)
    K = terms.size + 0.5
    tail = 1.0 / (2.0 * theta * theta * K * K)
    return 1.0 - 4.0 * (math.fsum(terms) + tail)


def _tau_amh(theta: float) -> float:
    if abs(theta) < 1e-4:
        return 2.0 * theta / 9.0 + theta**2 / 18.0 + theta**3 / 45.0 + theta**4 / 90.0
    if theta == 1.0:
        return 1.0 / 3.0
    return 1.0 - 2.0 * (theta + (1.0 - theta) ** 2 * math.log1p(-theta)) / (3.0 * theta**2)


_PL_NODES = 96
_PL_PANELS = 8


@lru_cache(maxsize=1)
def _pl_grid():
    x, w = np.polynomial.legendre.leggauss(_PL_NODES)
    edges = np.linspace(0.0, 1.0, _PL_PANELS + 1)
    pts = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return pts, wts


def _tau_plackett(theta: float) -> float:
    """tau = 1 - 4 int int C_u C_v du dv on a fixed composite Gauss-Legendre grid.

    The grid is fixed so tau is a smooth function of theta; absolute accuracy
    is about 1e-4 or better for |tau| <= 0.9.
    """
    if theta == 1.0:
        return 0.0
    x, w = _pl_grid()
    u = x[:, None]
    v = x[None, :]
    s, r = _plackett_parts(u, v, theta)
    cu = 0.5 * (1.0 - (s - 2.0 * theta * v) / r)
    cv = 0.5 * (1.0 - (s - 2.0 * theta * u) / r)
    return 1.0 - 4.0 * float(w @ (cu * cv) @ w)


def _tau_base(base: str, theta: float) -> float:
    if base == "indep":
        return 0.0
    if base in ("normal", "student"):
        return 2.0 / math.pi * math.asin(theta)
    if base == "clayton":
        return theta / (theta + 2.0)
    if base == "gumbel":
        return 1.0 - 1.0 / theta
    if base == "joe":
        return _tau_joe(theta)
    if base == "frank":
        return _tau_frank(theta)
    if base == "fgm":
        return 2.0 * theta / 9.0
    if base == "amh":
        return _tau_amh(theta)
    if base == "plackett":
        return _tau_plackett(theta)
    raise DomainError(base)


def tau_from_theta(family, theta: float) -> float:
    """Kendall's tau implied by ``theta``."""
    spec = get_copula(family)
    theta = float(theta)
    _check_theta(spec, theta)
    if spec.base == "frank":
        theta = max(-FRANK_CAP, min(FRANK_CAP, theta))
    if spec.rotation in (90, 270):
        tau = -_tau_base(spec.base, -theta)
    else:
        tau = _tau_base(spec.base, theta)
    if not math.isfinite(tau):
        raise NumericError(f"non-finite tau for {spec.code} at theta={theta}")
    return tau


@lru_cache(maxsize=None)
def _cached_range(code: str) -> Interval:
    spec = FAMILIES[code]
    if spec.base == "indep":
        return Interval(0.0, 0.0, True, True)
    if spec.base in ("normal", "student", "plackett"):
        return Interval(-1.0, 1.0)
    if spec.one_sided:
        return Interval(-1.0, 0.0) if spec.rotation in (90, 270) else Interval(0.0, 1.0)
    if spec.base == "frank":
        t = _tau_frank(FRANK_CAP)
        return Interval(-t, t, True, True)
    if spec.base == "fgm":
        return Interval(-2.0 / 9.0, 2.0 / 9.0, True, True)
    if spec.base == "amh":
        return Interval(_tau_amh(-1.0), 1.0 / 3.0, True, False)
    raise DomainError(code)


def tau_range(family) -> Interval:
    """Interval of Kendall's tau values the family can attain."""
    return _cached_range(get_copula(family).code)


def _solve(fun, lo: float, hi: float) -> float:
    return optimize.brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _theta_base(base: str, tau: float) -> float:
    """Base-family parameter attaining ``tau`` (tau of the right sign)."""
    if base == "indep":
        return 0.0
    if base in ("normal", "student"):
        return math.sin(0.5 * math.pi * tau)
    if base == "clayton":
        return 2.0 * tau / (1.0 - tau)
    if base == "gumbel":
        return 1.0 / (1.0 - tau)
    if base == "fgm":
        return 4.5 * tau
    if base == "frank":
        if tau == 0.0:
            return 0.0
        return _solve(lambda t: _tau_frank(t) - tau, -FRANK_CAP, FRANK_CAP)
    if base == "amh":
        if tau == 0.0:
            return 0.0
        return _solve(lambda t: _tau_amh(t) - tau, -1.0, 1.0 - 1e-15)
    if base == "joe":
        hi = 2.0
        while _tau_joe(hi) < tau:
            hi *= 2.0
            if hi > 1e8:
                raise NumericError(f"cannot bracket Joe parameter for tau={tau}")
        return _solve(lambda t: _tau_joe(t) - tau, 1.0, hi)
    if base == "plackett":
        if tau == 0.0:
            return 1.0
        return math.exp(_solve(lambda lt: _tau_plackett(math.exp(lt)) - tau, -25.0, 25.0))
    raise DomainError(base)


def theta_from_tau(family, tau: float) -> float:
    """Copula parameter attaining Kendall's ``tau``."""
    spec = get_copula(family)
    tau = float(tau)
    rng = tau_range(spec)
    if math.isnan(tau) or tau not in rng:
        raise TauRangeError(f"tau={tau} outside the attainable range {rng} of family {spec.code}")
    if spec.rotation in (90, 270):
        return -_theta_base(spec.base, -tau)
    return _theta_base(spec.base, tau)


# ---------------------------------------------------------------------------
# links between the unconstrained predictor and theta


def link_theta(family, eta):
    """Map an unconstrained predictor ``eta`` onto the interior of the theta domain."""
    spec = get_copula(family)
    eta = np.asarray(eta, dtype=float)
    link = spec.link
    if link == "none":
        out = np.zeros_like(eta)
    elif link == "identity":
        out = eta.copy()
    elif link == "tanh":
        out = np.tanh(eta)
    elif link == "exp":
        out = np.exp(eta)
    elif link == "negexp":
        out = -np.exp(eta)
    elif link == "oneplusexp":
        out = 1.0 + np.exp(eta)
    elif link == "negoneminusexp":
        out = -1.0 - np.exp(eta)
    else:
        raise DomainError(link)
    return float(out) if out.ndim == 0 else out


def unlink_theta(family, theta):
    """Inverse of :func:`link_theta`."""
    spec = get_copula(family)
    t = np.asarray(theta, dtype=float)
    link = spec.link
    with np.errstate(divide="ignore", invalid="ignore"):
        if link == "none":
            out = np.zeros_like(t)
            bad = t != 0.0
        elif link == "identity":
            out = t.copy()
            bad = ~np.isfinite(t)
        elif link == "tanh":
            out = np.arctanh(t)
            bad = np.abs(t) >= 1.0
        elif link == "exp":
            out = np.log(t)
            bad = t <= 0.0
        elif link == "negexp":
            out = np.log(-t)
            bad = t >= 0.0
        elif link == "oneplusexp":
            out = np.log(t - 1.0)
            bad = t <= 1.0
        else:
            out = np.log(-t - 1.0)
            bad = t >= -1.0
    if np.any(bad | np.isnan(t)):
        raise LinkError(f"theta={theta!r} is on or outside the boundary of {spec.theta_domain} ({spec.code})")
    return float(out) if out.ndim == 0 else out
