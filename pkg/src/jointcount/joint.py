"""Joint pmf of two Poisson counts coupled by a copula, its log-likelihood and derivatives.

The model for observation ``i`` has three linear predictors::

    eta1 = x1_i' beta1,   eta2 = x2_i' beta2,   eta_theta = beta_theta

with ``lambda_j = exp(eta_j)`` and ``theta = link(eta_theta)``.  The mass
function is the rectangle difference of four copula values at the marginal
cdfs, with ``F(y - 1)`` obtained as ``F(y) - f(y)``.

Derivatives are taken numerically with respect to the three predictors of
each observation (a single batched stencil call) and then mapped to the
coefficients through the design matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from jointcount.copulas import CopulaSpec, cdf_unchecked, get_copula, link_theta
from jointcount.errors import NumericError, StructuralError
from jointcount.margins import poisson_cdf, poisson_logpmf

PMF_FLOOR = 1e-300
NEG_TOL = 1e-12
WEIGHT_FLOOR = 1e-8

# stencil step in predictor space; sixth-order axis formulas keep the
# truncation error near 1e-14 while round-off stays around 1e-9
FD_STEP = 5e-3
_D1 = np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0
_D2 = np.array([2.0, -27.0, 270.0, 270.0, -27.0, 2.0]) / 180.0
_D2_CENTER = -490.0 / 180.0
_AXIS = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])


@dataclass(frozen=True)
class ModelData:
    """Responses and design matrices (intercept column included)."""

    y1: np.ndarray
    y2: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    names1: tuple = ()
    names2: tuple = ()

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y2 = np.asarray(self.y2, dtype=float)
        X1 = np.atleast_2d(np.asarray(self.X1, dtype=float))
        X2 = np.atleast_2d(np.asarray(self.X2, dtype=float))
        n = y1.shape[0]
        if y2.shape[0] != n or X1.shape[0] != n or X2.shape[0] != n:
            raise StructuralError("responses and design matrices have different row counts")
        if n == 0:
            raise StructuralError("no observations")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "X2", X2)
        if not self.names1:
            object.__setattr__(self, "names1", tuple(f"b{j}" for j in range(X1.shape[1])))
        if not self.names2:
            object.__setattr__(self, "names2", tuple(f"b{j}" for j in range(X2.shape[1])))

    @property
    def n(self) -> int:
        return self.y1.shape[0]

    @property
    def k1(self) -> int:
        return self.X1.shape[1]

    @property
    def k2(self) -> int:
        return self.X2.shape[1]

    def subset(self, idx) -> "ModelData":
        idx = np.asarray(idx)
        return ModelData(self.y1[idx], self.y2[idx], self.X1[idx], self.X2[idx], self.names1, self.names2)


@dataclass(frozen=True)
class CoefBlock:
    """Coefficients of both margins and the copula intercept.

    ``beta_theta`` is None for the independence copula, which has no
    dependence parameter.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    beta_theta: float | None = None
    names1: tuple = ()
    names2: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "beta1", np.asarray(self.beta1, dtype=float).copy())
        object.__setattr__(self, "beta2", np.asarray(self.beta2, dtype=float).copy())
        if self.beta_theta is not None:
            object.__setattr__(self, "beta_theta", float(self.beta_theta))

    @property
    def k(self) -> int:
        return self.beta1.size + self.beta2.size + (self.beta_theta is not None)

    @property
    def index_map(self) -> dict:
        n1 = self.names1 or tuple(f"b{j}" for j in range(self.beta1.size))
        n2 = self.names2 or tuple(f"b{j}" for j in range(self.beta2.size))
        out = {f"eq1:{nm}": j for j, nm in enumerate(n1)}
        out.update({f"eq2:{nm}": self.beta1.size + j for j, nm in enumerate(n2)})
        if self.beta_theta is not None:
            out["theta:(Intercept)"] = self.k - 1
        return out

    def to_vector(self) -> np.ndarray:
        parts = [self.beta1, self.beta2]
        if self.beta_theta is not None:
            parts.append(np.array([self.beta_theta]))
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, k1: int, k2: int, has_theta: bool, names1=(), names2=()) -> "CoefBlock":
        vec = np.asarray(vec, dtype=float)
        expected = k1 + k2 + int(has_theta)
        if vec.size != expected:
            raise StructuralError(f"coefficient vector has {vec.size} entries, expected {expected}")
        bt = float(vec[k1 + k2]) if has_theta else None
        return cls(vec[:k1], vec[k1:k1 + k2], bt, tuple(names1), tuple(names2))


@dataclass(frozen=True)
class PenaltyConfig:
    xi: float = 0.0
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    weight_floor: float = WEIGHT_FLOOR

    def __post_init__(self):
        if not self.xi >= 0:
            raise StructuralError("penalty strength must be nonnegative")
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).copy())


# ---------------------------------------------------------------------------
# mass function


def _rect(spec: CopulaSpec, theta, lam1, lam2, y1, y2):
    """Unchecked rectangle pmf for broadcastable arrays."""
    lam1, lam2, y1, y2, theta = np.broadcast_arrays(
        np.asarray(lam1, float), np.asarray(lam2, float), np.asarray(y1, float), np.asarray(y2, float),
        np.asarray(theta, float),
    )
    F1 = np.asarray(poisson_cdf(lam1, y1))
    F2 = np.asarray(poisson_cdf(lam2, y2))
    if spec.is_independence:
        return np.exp(poisson_logpmf(lam1, y1) + poisson_logpmf(lam2, y2))
    f1 = np.exp(poisson_logpmf(lam1, y1))
    f2 = np.exp(poisson_logpmf(lam2, y2))
    F1m = np.where(y1 > 0, np.maximum(F1 - f1, 0.0), 0.0)
    F2m = np.where(y2 > 0, np.maximum(F2 - f2, 0.0), 0.0)
    u = np.stack([F1, F1m, F1, F1m])
    v = np.stack([F2, F2, F2m, F2m])
    c = cdf_unchecked(spec, theta[None], u, v)
    return (c[0] - c[1]) - (c[2] - c[3])


def _clean(p, where=""):
    if np.any(~np.isfinite(p)):
        bad = np.flatnonzero(~np.isfinite(np.ravel(p)))
        raise NumericError(f"non-finite joint pmf{where} at flat index {int(bad[0])}")
    if np.any(p < -NEG_TOL):
        bad = np.flatnonzero(np.ravel(p) < -NEG_TOL)
        raise NumericError(
            f"joint pmf {float(np.ravel(p)[bad[0]]):.3e} below -1e-12{where} at flat index {int(bad[0])}"
        )
    return np.maximum(p, 0.0)


def joint_pmf(family, theta, lambda1, lambda2, y1, y2):
    """P(Y1 = y1, Y2 = y2) under Poisson margins joined by a copula.

    Parameters
    ----------
    family : str or CopulaSpec
    theta : float
        Copula parameter (ignored for ``indep``).
    lambda1, lambda2 : float or array_like
        Poisson rates.
    y1, y2 : int or array_like
        Nonnegative counts.

    Returns
    -------
    float or ndarray
        Probabilities; round-off negatives above -1e-12 are returned as 0.

    Raises
    ------
    NumericError
        If a rectangle difference is below -1e-12.
    """
    from jointcount.copulas import _check_theta

    spec = get_copula(family)
    if not spec.is_independence:
        _check_theta(spec, theta)
    y1a = np.asarray(y1)
    y2a = np.asarray(y2)
    if np.any(y1a < 0) or np.any(y2a < 0):
        raise StructuralError("counts must be nonnegative")
    out = _clean(_rect(spec, 0.0 if theta is None else theta, lambda1, lambda2, y1a, y2a))
    return float(out) if out.ndim == 0 else out


def joint_pmf_direct(family, theta, lambda1, lambda2, y1, y2):
    """Scalar rectangle pmf using F(y - 1) evaluated directly.

    Slow reference route kept for cross-checking :func:`joint_pmf`.
    """
    spec = get_copula(family)
    F = lambda lam, y: 0.0 if y < 0 else float(poisson_cdf(lam, y))
    a1, b1 = F(lambda1, y1), F(lambda1, y1 - 1)
    a2, b2 = F(lambda2, y2), F(lambda2, y2 - 1)
    c = lambda u, v: float(cdf_unchecked(spec, theta, u, v))
    return c(a1, a2) - c(b1, a2) - c(a1, b2) + c(b1, b2)


# ---------------------------------------------------------------------------
# likelihood


def _as_vector(beta, data: ModelData, spec: CopulaSpec) -> np.ndarray:
    if isinstance(beta, CoefBlock):
        vec = beta.to_vector()
    else:
        vec = np.asarray(beta, dtype=float)
    expected = data.k1 + data.k2 + spec.n_params
    if vec.size != expected:
        raise StructuralError(f"coefficient vector has {vec.size} entries, expected {expected}")
    return vec


def predictors(beta, data: ModelData, spec: CopulaSpec):
    """Linear predictors (eta1, eta2, eta_theta) for every observation."""
    vec = _as_vector(beta, data, spec)
    k1, k2 = data.k1, data.k2
    eta1 = data.X1 @ vec[:k1]
    eta2 = data.X2 @ vec[k1:k1 + k2]
    eta_t = vec[k1 + k2] if spec.n_params else 0.0
    return eta1, eta2, eta_t


def _obs_terms(spec: CopulaSpec, y1, y2, eta1, eta2, eta_t):
    """log pmf per observation for broadcastable predictor arrays."""
    lam1 = np.exp(eta1)
    lam2 = np.exp(eta2)
    theta = link_theta(spec, eta_t) if spec.n_params else 0.0
    p = _clean(_rect(spec, theta, lam1, lam2, y1, y2))
    return np.log(np.maximum(p, PMF_FLOOR))


def obs_loglik(beta, data: ModelData, family) -> np.ndarray:
    spec = get_copula(family)
    eta1, eta2, eta_t = predictors(beta, data, spec)
    return _obs_terms(spec, data.y1, data.y2, eta1, eta2, eta_t)


def log_likelihood(beta, data: ModelData, family) -> float:
    """Compensated sum of per-observation log pmf values.

    Raises
    ------
    NumericError
        If any term is non-finite; the message names the observation index.
    """
    terms = obs_loglik(beta, data, family)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise NumericError(f"non-finite log-likelihood contribution at observation {int(bad[0])}")
    return math.fsum(terms.tolist())


def build_penalty(p: int, config: PenaltyConfig, with_theta: bool = True) -> np.ndarray:
    """Penalty matrix for paired coefficient differences.

    The margin blocks are ``xi * diag(w)`` on the diagonal and
    ``-xi * diag(w)`` off it; the copula row and column are zero.
    """
    w = np.maximum(np.asarray(config.weights, dtype=float), config.weight_floor)
    if w.size != p + 1:
        raise StructuralError(f"penalty needs {p + 1} weights, got {w.size}")
    D = config.xi * np.diag(w)
    m = p + 1
    k = 2 * m + int(with_theta)
    S = np.zeros((k, k))
    S[:m, :m] = D
    S[m:2 * m, m:2 * m] = D
    S[:m, m:2 * m] = -D
    S[m:2 * m, :m] = -D
    return S


def penalized_objective(beta, data: ModelData, family, S=None) -> float:
    ll = log_likelihood(beta, data, family)
    if S is None:
        return ll
    vec = _as_vector(beta, data, get_copula(family))
    return ll - 0.5 * float(vec @ S @ vec)


# ---------------------------------------------------------------------------
# derivatives


def _stencil(dim: int, h: float) -> np.ndarray:
    pts = [np.zeros(dim)]
    for d in range(dim):
        for s in _AXIS:
            e = np.zeros(dim)
            e[d] = s * h
            pts.append(e)
    for a in range(dim):
        for b in range(a + 1, dim):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                e = np.zeros(dim)
                e[a] = sa * h
                e[b] = sb * h
                pts.append(e)
    return np.array(pts)


def predictor_derivatives(spec: CopulaSpec, y1, y2, eta1, eta2, eta_t, h: float = FD_STEP):
    """Value, gradient and Hessian of each log pmf term in predictor space.

    Returns arrays of shape ``(n,)``, ``(n, dim)`` and ``(n, dim, dim)``
    where ``dim`` is 3, or 2 for the independence copula.
    """
    dim = 3 if spec.n_params else 2
    n = np.shape(eta1)[0]
    off = _stencil(dim, h)
    e1 = eta1[None, :] + off[:, 0, None]
    e2 = eta2[None, :] + off[:, 1, None]
    et = (eta_t + off[:, 2, None]) * np.ones((1, n)) if dim == 3 else 0.0
    L = _obs_terms(spec, y1[None, :], y2[None, :], e1, e2, et)
    f0 = L[0]
    grad = np.empty((n, dim))
    hess = np.empty((n, dim, dim))
    pos = 1
    for d in range(dim):
        block = L[pos:pos + 6]
        grad[:, d] = _D1 @ block / h
        hess[:, d, d] = (_D2 @ block + _D2_CENTER * f0) / (h * h)
        pos += 6
    for a in range(dim):
        for b in range(a + 1, dim):
            pp, pm, mp, mm = L[pos:pos + 4]
            hess[:, a, b] = hess[:, b, a] = (pp - pm - mp + mm) / (4.0 * h * h)
            pos += 4
    return f0, grad, hess


def gradient_and_hessian(beta, data: ModelData, family, S=None):
    """Gradient and Hessian of the penalized objective with respect to the coefficients.

    Returns
    -------
    grad : ndarray, shape (k,)
    hess : ndarray, shape (k, k)
    """
    spec = get_copula(family)
    vec = _as_vector(beta, data, spec)
    eta1, eta2, eta_t = predictors(vec, data, spec)
    _, g, H = predictor_derivatives(spec, data.y1, data.y2, eta1, eta2, eta_t)
    X1, X2 = data.X1, data.X2
    k1, k2 = data.k1, data.k2
    k = vec.size
    grad = np.empty(k)
    grad[:k1] = X1.T @ g[:, 0]
    grad[k1:k1 + k2] = X2.T @ g[:, 1]
    hess = np.empty((k, k))
    hess[:k1, :k1] = X1.T @ (H[:, 0, 0, None] * X1)
    hess[k1:k1 + k2, k1:k1 + k2] = X2.T @ (H[:, 1, 1, None] * X2)
    hess[:k1, k1:k1 + k2] = X1.T @ (H[:, 0, 1, None] * X2)
    hess[k1:k1 + k2, :k1] = hess[:k1, k1:k1 + k2].T
    if spec.n_params:
        t = k1 + k2
        grad[t] = g[:, 2].sum()
        hess[:k1, t] = hess[t, :k1] = X1.T @ H[:, 0, 2]
        hess[k1:t, t] = hess[t, k1:t] = X2.T @ H[:, 1, 2]
        hess[t, t] = H[:, 2, 2].sum()
    if S is not None:
        grad -= S @ vec
        hess -= S
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NumericError(f"non-finite gradient component {int(bad[0])}")
    if not np.all(np.isfinite(hess)):
        i, j = np.argwhere(~np.isfinite(hess))[0]
        raise NumericError(f"non-finite Hessian entry ({int(i)}, {int(j)})")
    return grad, hess
