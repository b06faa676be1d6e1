"""Trust-region Newton maximisation of the (penalised) copula log-likelihood."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats

from jointcount.copulas import (
    CopulaSpec,
    get_copula,
    link_theta,
    tau_from_theta,
    tau_range,
    theta_from_tau,
    unlink_theta,
)
from jointcount.errors import ConfigError, DataError, JointCountError, StructuralError
from jointcount.joint import (
    WEIGHT_FLOOR,
    CoefBlock,
    ModelData,
    PenaltyConfig,
    build_penalty,
    gradient_and_hessian,
    log_likelihood,
)

INDEPENDENCE_TAU = 1e-4
# relative size of round-off in the summed log-likelihood
ROUNDOFF = 1e-11


@dataclass(frozen=True)
class SolverOptions:
    initial_radius: float = 1.0
    max_radius: float = 100.0
    accept_ratio: float = 0.1
    shrink: float = 0.25
    grow: float = 2.5
    gradient_tol: float = 1e-7
    max_inner_iter: int = 200
    max_outer_iter: int = 25
    xi: float = 0.0
    weight_tol: float = 1e-8
    weight_floor: float = WEIGHT_FLOOR

    def __post_init__(self):
        if not 0.0 < self.accept_ratio < 1.0:
            raise ConfigError("accept_ratio must lie in (0, 1)")
        if not (0.0 < self.shrink < 1.0 < self.grow):
            raise ConfigError("need 0 < shrink < 1 < grow")
        if not (0.0 < self.initial_radius <= self.max_radius):
            raise ConfigError("need 0 < initial_radius <= max_radius")
        if not (self.gradient_tol > 0 and self.weight_tol > 0 and self.weight_floor > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_inner_iter < 1 or self.max_outer_iter < 1:
            raise ConfigError("iteration limits must be positive")
        if not self.xi >= 0:
            raise ConfigError("xi must be nonnegative")


@dataclass
class FitResult:
    """Outcome of a fit.

    ``aic`` uses the full coefficient count ``k``; ``converged`` is set only
    when the final gradient satisfies the solver tolerance.
    """

    family: str
    beta_hat: CoefBlock
    loglik: float
    penalized_obj: float
    aic: float
    theta_hat: float
    tau_hat: float
    converged: bool
    n_inner: int
    n_outer: int
    grad_norm: float
    k: int
    n_obs: int
    xi: float = 0.0
    weights: np.ndarray | None = None
    std_errors: np.ndarray | None = None
    effectively_independent: bool = False
    message: str = ""
    model: object = None

    @property
    def max_pair_diff(self) -> float:
        b = self.beta_hat
        if b.beta1.size != b.beta2.size:
            return math.nan
        return float(np.max(np.abs(b.beta1 - b.beta2)))


@dataclass
class _TRState:
    x: np.ndarray
    f: float
    g: np.ndarray
    H: np.ndarray
    n_iter: int = 0
    converged: bool = False
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# generic trust-region maximiser


def _shifted_cholesky(B: np.ndarray):
    """Cholesky factor of B + mu*I for the smallest mu (on a geometric ladder) that works."""
    scale = max(float(np.max(np.abs(np.diag(B)))), 1e-12)
    mu = 0.0
    eye = np.eye(B.shape[0])
    for _ in range(80):
        try:
            return linalg.cho_factor(B + mu * eye, lower=True, check_finite=False), mu
        except linalg.LinAlgError:
            mu = 1e-10 * scale if mu == 0.0 else 4.0 * mu
    raise StructuralError("could not regularise the Hessian")


def dogleg_step(g: np.ndarray, B: np.ndarray, radius: float) -> np.ndarray:
    """Dogleg step for maximising g'p - p'Bp/2 subject to |p| <= radius."""
    cf, mu = _shifted_cholesky(B)
    pn = linalg.cho_solve(cf, g, check_finite=False)
    if np.linalg.norm(pn) <= radius:
        return pn
    Bs = B + mu * np.eye(B.shape[0])
    gbg = float(g @ Bs @ g)
    gg = float(g @ g)
    pu = (gg / gbg) * g
    nu = np.linalg.norm(pu)
    if nu >= radius:
        return (radius / math.sqrt(gg)) * g
    d = pn - pu
    a = float(d @ d)
    b = 2.0 * float(pu @ d)
    c = nu * nu - radius * radius
    t = (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    return pu + t * d


def _stationary(st: _TRState, opts: SolverOptions) -> bool:
    """Gradient below tolerance, or a Newton decrement below the objective's round-off.

    The second test covers stiff penalised problems, where the gradient
    along the penalised directions cannot be resolved below ``xi * eps``.
    """
    if np.max(np.abs(st.g)) <= opts.gradient_tol:
        return True
    try:
        cf = linalg.cho_factor(-st.H, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return False
    dec = float(st.g @ linalg.cho_solve(cf, st.g, check_finite=False))
    return dec <= ROUNDOFF * (1.0 + abs(st.f))


def trust_region_maximize(fun, derivs, x0, opts: SolverOptions, f0: float | None = None) -> _TRState:
    """Maximise ``fun`` given ``derivs(x) -> (grad, hess)``.

    Trial points where ``fun`` raises a package error or returns a
    non-finite value are rejected and the radius shrinks.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = fun(x) if f0 is None else f0
    g, H = derivs(x)
    st = _TRState(x, f, g, H)
    radius = opts.initial_radius
    while st.n_iter < opts.max_inner_iter:
        if _stationary(st, opts):
            st.converged = True
            break
        st.n_iter += 1
        B = -st.H
        p = dogleg_step(st.g, B, radius)
        pnorm = float(np.linalg.norm(p))
        pred = float(st.g @ p - 0.5 * p @ B @ p)
        try:
            f_new = fun(st.x + p)
        except JointCountError:
            f_new = -math.inf
        tol_f = ROUNDOFF * (1.0 + abs(st.f))
        if not math.isfinite(f_new):
            rho = -math.inf
        elif pred <= tol_f:
            # the gain is below the objective's round-off, so the ratio is
            # meaningless: accept when the gradient shrinks instead
            g_new, H_new = derivs(st.x + p)
            ok = f_new >= st.f - tol_f and np.max(np.abs(g_new)) < np.max(np.abs(st.g))
            if ok:
                st.x = st.x + p
                st.f = f_new
                st.g, st.H = g_new, H_new
                st.history.append(f_new)
                continue
            rho = -math.inf
        else:
            rho = (f_new - st.f) / pred
        if rho >= opts.accept_ratio:
            assert f_new >= st.f, "objective decreased on an accepted step"
            st.x = st.x + p
            st.f = f_new
            st.g, st.H = derivs(st.x)
            st.history.append(f_new)
        if rho < 0.25:
            radius = opts.shrink * min(radius, pnorm)
        elif rho > 0.75 and pnorm >= 0.99 * radius:
            radius = min(opts.grow * radius, opts.max_radius)
        if radius < 1e-14 * (1.0 + float(np.linalg.norm(st.x))):
            st.converged = _stationary(st, opts)
            break
    else:
        st.converged = _stationary(st, opts)
    return st


# ---------------------------------------------------------------------------
# starting values


def poisson_glm(X, y, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Maximum-likelihood Poisson regression with log link by Newton's method."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    ybar = y.mean()
    if ybar <= 0:
        raise DataError("all responses are zero; the Poisson rate is not identifiable")
    beta = np.zeros(X.shape[1])
    beta[0] = math.log(ybar)
    for _ in range(max_iter):
        mu = np.exp(X @ beta)
        score = X.T @ (y - mu)
        info = X.T @ (mu[:, None] * X)
        step = linalg.solve(info, score, assume_a="pos")
        beta = beta + step
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(beta))):
            break
    return beta


def _dependent_columns(X: np.ndarray, names) -> list:
    kept = []
    dep = []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) == len(trial):
            kept = trial
        else:
            dep.append(names[j] if j < len(names) else str(j))
    return dep


def check_design(data: ModelData, spec: CopulaSpec) -> None:
    k = data.k1 + data.k2 + spec.n_params
    if data.n < k:
        raise StructuralError(f"{data.n} observations are fewer than the {k} coefficients")
    for label, X, names in (("margin 1", data.X1, data.names1), ("margin 2", data.X2, data.names2)):
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise StructuralError(f"{label} design is rank deficient; dependent columns: {_dependent_columns(X, names)}")


def initial_eta_theta(spec: CopulaSpec, y1, y2) -> float:
    """Predictor value matching the clipped empirical Kendall tau of the responses."""
    if not spec.n_params:
        return 0.0
    try:
        tau_emp = stats.kendalltau(y1, y2).statistic
        if not math.isfinite(tau_emp):
            return 0.0
        r = tau_range(spec)
        lo = r.lower + 0.01 if math.isfinite(r.lower) else -0.99
        hi = r.upper - 0.01 if math.isfinite(r.upper) else 0.99
        tau0 = min(max(tau_emp, lo), hi)
        return float(unlink_theta(spec, theta_from_tau(spec, tau0)))
    except (JointCountError, ValueError):
        return 0.0


def initial_vector(spec: CopulaSpec, data: ModelData) -> np.ndarray:
    b1 = poisson_glm(data.X1, data.y1)
    b2 = poisson_glm(data.X2, data.y2)
    parts = [b1, b2]
    if spec.n_params:
        parts.append(np.array([initial_eta_theta(spec, data.y1, data.y2)]))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# model fitting


def _resolve(model, data):
    """Return (CopulaSpec, ModelData) from flexible arguments."""
    from jointcount.data import Dataset, ModelSpec

    if isinstance(model, ModelSpec):
        spec = get_copula(model.family)
        if isinstance(data, Dataset):
            data = model.design(data)
    else:
        spec = get_copula(model)
        if isinstance(data, Dataset):
            raise StructuralError("a ModelSpec is needed to build the design from a Dataset")
    if not isinstance(data, ModelData):
        raise StructuralError("data must be a ModelData or Dataset")
    return spec, data


def _objective_fns(spec: CopulaSpec, data: ModelData, S):
    def fun(x):
        ll = log_likelihood(x, data, spec)
        return ll if S is None else ll - 0.5 * float(x @ S @ x)

    def derivs(x):
        return gradient_and_hessian(x, data, spec, S)

    return fun, derivs


def _std_errors(H: np.ndarray) -> np.ndarray:
    try:
        cf = linalg.cho_factor(-H, lower=True)
        cov = linalg.cho_solve(cf, np.eye(H.shape[0]))
        return np.sqrt(np.diag(cov))
    except linalg.LinAlgError:
        return np.full(H.shape[0], np.nan)


def _result(spec, data, st: _TRState, S, n_outer, xi, weights, message="") -> FitResult:
    x = st.x
    coef = CoefBlock.from_vector(x, data.k1, data.k2, bool(spec.n_params), data.names1, data.names2)
    ll = log_likelihood(x, data, spec)
    k = x.size
    if spec.n_params:
        theta = float(link_theta(spec, x[-1]))
        tau = float(tau_from_theta(spec, theta))
    else:
        theta = tau = 0.0
    pen = ll if S is None else ll - 0.5 * float(x @ S @ x)
    indep = spec.is_independence or (spec.one_sided and abs(tau) < INDEPENDENCE_TAU)
    return FitResult(
        family=spec.code,
        beta_hat=coef,
        loglik=ll,
        penalized_obj=pen,
        aic=-2.0 * ll + 2.0 * k,
        theta_hat=theta,
        tau_hat=tau,
        converged=st.converged,
        n_inner=st.n_iter,
        n_outer=n_outer,
        grad_norm=float(np.max(np.abs(st.g))),
        k=k,
        n_obs=data.n,
        xi=xi,
        weights=None if weights is None else np.asarray(weights).copy(),
        std_errors=_std_errors(st.H),
        effectively_independent=bool(indep),
        message=message or ("converged" if st.converged else "iteration limit or stalled step"),
    )


def _start_vector(spec, data, start):
    if start is None:
        return initial_vector(spec, data)
    if isinstance(start, FitResult):
        start = start.beta_hat
    if isinstance(start, CoefBlock):
        return start.to_vector()
    return np.asarray(start, dtype=float)


def fit(model, data, opts: SolverOptions | None = None, start=None) -> FitResult:
    """Unpenalised maximum-likelihood fit.

    Parameters
    ----------
    model : ModelSpec, str or CopulaSpec
        Model description or bare family code.
    data : ModelData or Dataset
        A Dataset requires ``model`` to be a ModelSpec.
    opts : SolverOptions, optional
    start : FitResult, CoefBlock or array_like, optional
        Warm start; defaults to separate Poisson fits plus a tau-matched
        copula intercept.
    """
    opts = opts or SolverOptions()
    spec, data = _resolve(model, data)
    check_design(data, spec)
    fun, derivs = _objective_fns(spec, data, None)
    st = trust_region_maximize(fun, derivs, _start_vector(spec, data, start), opts)
    res = _result(spec, data, st, None, 0, 0.0, None)
    res.model = model if not isinstance(model, (str, CopulaSpec)) else None
    return res


def fit_penalized(model, data, opts: SolverOptions | None = None, start=None) -> FitResult:
    """Fit with the adaptive ridge penalty on paired coefficient differences.

    The weights start at the absolute differences of the unpenalised fit
    and are updated after each inner fit.  A weight is never lowered, so
    the penalty on a pair cannot relax once the estimates move together.
    """
    opts = opts or SolverOptions()
    spec, data = _resolve(model, data)
    if data.k1 != data.k2:
        raise StructuralError(
            f"paired penalty needs equal coefficient counts, got {data.k1} and {data.k2}"
        )
    base = fit(spec, data, replace(opts, xi=0.0), start=start)
    if opts.xi == 0.0:
        return base
    p = data.k1 - 1
    m = data.k1
    with_theta = bool(spec.n_params)
    x = base.beta_hat.to_vector()
    weights = np.maximum(np.abs(x[:m] - x[m:2 * m]), opts.weight_floor)
    n_inner = base.n_inner
    st = None
    S = None
    n_outer = 0
    for n_outer in range(1, opts.max_outer_iter + 1):
        S = build_penalty(p, PenaltyConfig(opts.xi, weights, opts.weight_floor), with_theta)
        fun, derivs = _objective_fns(spec, data, S)
        st = trust_region_maximize(fun, derivs, x, opts)
        n_inner += st.n_iter
        x = st.x
        new_w = np.maximum(weights, np.abs(x[:m] - x[m:2 * m]))
        delta = float(np.max(np.abs(new_w - weights)))
        weights = new_w
        if delta <= opts.weight_tol:
            break
    st.n_iter = n_inner
    res = _result(spec, data, st, S, n_outer, opts.xi, weights)
    res.model = base.model
    return res
