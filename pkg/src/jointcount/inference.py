"""Match predictions and forecast evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import special, stats

from jointcount.copulas import get_copula
from jointcount.errors import DataError, JointCountError, StructuralError
from jointcount.joint import ModelData, joint_pmf
from jointcount.margins import poisson_cdf

MAX_GOALS = 20
OUTCOMES = ("win", "draw", "loss")


@dataclass(frozen=True)
class ScoreGrid:
    """Joint probabilities of scores 0..20 for both teams; rows index y1."""

    probs: np.ndarray
    lambda1: float
    lambda2: float
    theta: float
    family: str = "indep"

    @property
    def total_mass(self) -> float:
        return math.fsum(self.probs.ravel().tolist())


@dataclass(frozen=True)
class ThreeWay:
    """Win, draw and loss probabilities from the first-named team's side."""

    pi_win: float
    pi_draw: float
    pi_loss: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pi_win, self.pi_draw, self.pi_loss])

    @property
    def total(self) -> float:
        return self.pi_win + self.pi_draw + self.pi_loss

    def normalized(self) -> "ThreeWay":
        s = self.total
        if not s > 0:
            raise DataError("three-way probabilities sum to zero")
        return ThreeWay(self.pi_win / s, self.pi_draw / s, self.pi_loss / s)


def grid_from_rates(family, theta: float, lambda1: float, lambda2: float, max_goals: int = MAX_GOALS) -> ScoreGrid:
    spec = get_copula(family)
    y = np.arange(max_goals + 1)
    th = 0.0 if spec.is_independence else theta
    P = joint_pmf(spec, th, lambda1, lambda2, y[:, None], y[None, :])
    return ScoreGrid(np.asarray(P), float(lambda1), float(lambda2), float(th), spec.code)


def _design_row(x, k: int, label: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != k - 1:
        raise StructuralError(f"{label} has {x.size} covariates, the model expects {k - 1}")
    return np.concatenate([[1.0], x])


def predicted_rates(fit, x1, x2):
    b = fit.beta_hat
    r1 = _design_row(x1, b.beta1.size, "x1")
    r2 = _design_row(x2, b.beta2.size, "x2")
    return float(np.exp(r1 @ b.beta1)), float(np.exp(r2 @ b.beta2))


def score_grid(fit, x1, x2, max_goals: int = MAX_GOALS) -> ScoreGrid:
    """Score grid for one match from covariate vectors without the intercept."""
    lam1, lam2 = predicted_rates(fit, x1, x2)
    return grid_from_rates(fit.family, fit.theta_hat, lam1, lam2, max_goals)


def three_way(grid: ScoreGrid) -> ThreeWay:
    P = grid.probs
    win = math.fsum(P[np.tril_indices_from(P, -1)].tolist())
    draw = math.fsum(np.diag(P).tolist())
    loss = math.fsum(P[np.triu_indices_from(P, 1)].tolist())
    return ThreeWay(win, draw, loss)


def skellam_three_way(lambda1: float, lambda2: float) -> ThreeWay:
    """Three-way probabilities from the difference of independent Poisson counts."""
    if not (lambda1 > 0 and lambda2 > 0):
        raise DataError("rates must be positive")
    d = stats.skellam(lambda1, lambda2)
    return ThreeWay(float(d.sf(0)), float(d.pmf(0)), float(d.cdf(-1)))


def outcome_of(y1, y2) -> str:
    return "win" if y1 > y2 else ("draw" if y1 == y2 else "loss")


def _outcome_index(outcome) -> int:
    if isinstance(outcome, str):
        try:
            return OUTCOMES.index(outcome)
        except ValueError as exc:
            raise DataError(f"unknown outcome {outcome!r}") from exc
    return int(outcome)


def match_metrics(pred: ThreeWay, outcome):
    """Ranked probability score, likelihood and classification hit for one match.

    A tie for the largest probability counts as a hit when the observed
    outcome is among the tied categories.
    """
    p = pred.normalized().as_array()
    j = _outcome_index(outcome)
    delta = np.zeros(3)
    delta[j] = 1.0
    cum = np.cumsum(p)[:2] - np.cumsum(delta)[:2]
    rps = 0.5 * float(cum @ cum)
    llh = float(p[j])
    cr = int(p[j] == p.max())
    return rps, llh, cr


def goals_distance(predictions, observations) -> float:
    """Mean Euclidean distance between observed scores and predicted rates."""
    pr = np.asarray(predictions, dtype=float).reshape(-1, 2)
    ob = np.asarray(observations, dtype=float).reshape(-1, 2)
    if pr.shape != ob.shape:
        raise StructuralError(f"{len(pr)} predictions but {len(ob)} observations")
    if len(pr) == 0:
        raise StructuralError("no matches")
    d = np.sqrt(((ob - pr) ** 2).sum(axis=1))
    return math.fsum(d.tolist()) / len(d)


def aic_rank(fits) -> list:
    """Fits sorted by AIC; equal values are ordered by family code."""
    return sorted(fits, key=lambda f: (f.aic, f.family))


def fitted_rates(fit, data: ModelData):
    b = fit.beta_hat
    return np.exp(data.X1 @ b.beta1), np.exp(data.X2 @ b.beta2)


def quantile_residuals(fit, data, seed: int, model=None):
    """Randomised quantile residuals of both margins.

    For each count a uniform draw from ``(F(y - 1), F(y))`` at the fitted
    rate is mapped through the standard normal quantile.
    """
    data = _as_model_data(data, model if model is not None else getattr(fit, "model", None))
    lam1, lam2 = fitted_rates(fit, data)
    rng = np.random.default_rng(seed)
    out = []
    for lam, y in ((lam1, data.y1), (lam2, data.y2)):
        hi = np.asarray(poisson_cdf(lam, y))
        lo = np.asarray(poisson_cdf(lam, y - 1))
        w = rng.random(y.size)
        # keep the draw strictly inside the interval
        w = np.clip(w, 1e-16, 1.0 - 1e-16)
        u = lo + w * (hi - lo)
        u = np.clip(u, np.nextafter(lo, 1.0), np.nextafter(hi, 0.0))
        out.append(special.ndtri(u))
    return out[0], out[1]


def _as_model_data(data, model) -> ModelData:
    if isinstance(data, ModelData):
        return data
    if model is None:
        raise StructuralError("a ModelSpec is needed to build the design from a Dataset")
    return model.design(data)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class CVResult:
    family: str
    penalized: bool
    matches: pd.DataFrame
    folds: pd.DataFrame
    aic: float = math.nan
    betting: float | None = None

    def summary(self) -> dict:
        m = self.matches
        out = {
            "family": self.family,
            "penalized": self.penalized,
            "rps": _mean(m["rps"]),
            "llh": _mean(m["llh"]),
            "cr": _mean(m["cr"]),
            "mse_goals": _mean(m["dist"]),
            "aic": self.aic,
        }
        if self.betting is not None:
            out["betting"] = self.betting
        return out


def _mean(s) -> float:
    vals = np.asarray(s, dtype=float).tolist()
    return math.fsum(vals) / len(vals) if vals else math.nan


def predict_matches(fit, data: ModelData) -> pd.DataFrame:
    """Per-match rates, three-way probabilities and metrics."""
    lam1, lam2 = fitted_rates(fit, data)
    rows = []
    for i in range(data.n):
        tw = three_way(grid_from_rates(fit.family, fit.theta_hat, lam1[i], lam2[i])).normalized()
        outc = outcome_of(data.y1[i], data.y2[i])
        rps, llh, cr = match_metrics(tw, outc)
        d = math.hypot(data.y1[i] - lam1[i], data.y2[i] - lam2[i])
        rows.append((lam1[i], lam2[i], tw.pi_win, tw.pi_draw, tw.pi_loss, outc, rps, llh, cr, d))
    cols = ["lambda1", "lambda2", "pi_win", "pi_draw", "pi_loss", "outcome", "rps", "llh", "cr", "dist"]
    return pd.DataFrame(rows, columns=cols)


def cross_validate(data, fold_key, model, opts=None, penalized: bool = False, odds=None, epsilon: float = 0.0,
                   dataset=None) -> CVResult:
    """Leave-one-fold-out evaluation.

    Parameters
    ----------
    data : Dataset or ModelData
    fold_key : str or array_like
        Column name of ``data`` (a Dataset) or one label per row.
    model : ModelSpec or family code
    penalized : bool
        Use the paired-coefficient penalty with ``opts.xi``.
    odds : array_like, optional
        ``(n, 3)`` decimal odds aligned with the rows; enables the betting
        summary (constant stakes, threshold ``epsilon``).
    """
    from jointcount.betting import run_backtest
    from jointcount.solver import SolverOptions, fit, fit_penalized

    if isinstance(fold_key, str):
        if isinstance(data, ModelData):
            raise StructuralError("fold column names need a Dataset")
        labels = data.frame[fold_key].to_numpy()
    else:
        labels = np.asarray(fold_key)
    md = _as_model_data(data, model if not isinstance(model, str) else None)
    if labels.shape[0] != md.n:
        raise StructuralError("fold labels do not match the number of rows")
    folds = sorted(pd.unique(labels).tolist())
    if len(folds) < 2:
        raise StructuralError("cross-validation needs at least two folds")
    if opts is None:
        opts = model.solver_options() if hasattr(model, "solver_options") else SolverOptions()
    family = get_copula(model.family if hasattr(model, "family") else model).code
    fitter = fit_penalized if penalized else fit
    parts = []
    status = []
    for f in folds:
        test = np.flatnonzero(labels == f)
        train = np.flatnonzero(labels != f)
        assert np.intersect1d(test, train).size == 0
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = fitter(family, md.subset(train), opts)
            pm = predict_matches(res, md.subset(test))
            pm.insert(0, "row", test)
            pm.insert(0, "fold", f)
            parts.append(pm)
            status.append((f, len(train), len(test), res.converged, ""))
        except (JointCountError, np.linalg.LinAlgError) as exc:
            status.append((f, len(train), len(test), False, f"{type(exc).__name__}: {exc}"))
    matches = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(
        columns=["fold", "row", "rps", "llh", "cr", "dist"])
    fold_table = pd.DataFrame(status, columns=["fold", "n_train", "n_test", "converged", "error"])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            full = fitter(family, md, opts)
        aic = full.aic
    except JointCountError:
        aic = math.nan
    betting = None
    if odds is not None and len(matches):
        o = np.asarray(odds, dtype=float)[matches["row"].to_numpy()]
        preds = [ThreeWay(*r) for r in matches[["pi_win", "pi_draw", "pi_loss"]].to_numpy()]
        ledger = run_backtest(preds, o, epsilon, "constant", outcomes=matches["outcome"].tolist())
        betting = ledger.return_ratio
    return CVResult(family, penalized, matches, fold_table, aic, betting)


METRIC_COLUMNS = ["family", "penalized", "rps", "llh", "cr", "mse_goals", "aic"]
# True where larger values are better
_DIRECTION = {"rps": False, "llh": True, "cr": True, "betting": True, "mse_goals": False}


def metrics_table(results) -> pd.DataFrame:
    rows = [r.summary() for r in results]
    df = pd.DataFrame(rows)
    cols = METRIC_COLUMNS + (["betting"] if "betting" in df.columns else [])
    return df[cols]


def rank_aggregate(table: pd.DataFrame, measures=("rps", "llh", "cr", "betting", "mse_goals")) -> pd.DataFrame:
    """Rank each family per measure (ties share the best rank) and sum the ranks."""
    out = pd.DataFrame({"family": table["family"].to_numpy()})
    used = []
    for m in measures:
        if m not in table.columns:
            continue
        out[m] = table[m].rank(method="min", ascending=not _DIRECTION[m]).astype(int).to_numpy()
        used.append(m)
    out["total"] = out[used].sum(axis=1)
    return out.sort_values(["total", "family"], kind="mergesort").reset_index(drop=True)
