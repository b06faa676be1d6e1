"""Synthetic bivariate count data and the two simulation studies.

Recovery study
    Unequal margin coefficients; data from one copula, every candidate
    family fitted; coefficient MSE and AIC recorded.
Penalty study
    Equal margin coefficients; the true family fitted with and without the
    paired-coefficient penalty.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import pdtrc

from jointcount.copulas import FAMILY_CODES, get_copula, tau_range, theta_from_tau
from jointcount.errors import ConfigError, JointCountError, StructuralError
from jointcount.joint import CoefBlock, ModelData, _clean, _rect
from jointcount.solver import SolverOptions, fit, fit_penalized

TAIL_MASS = 1e-10
MAX_SUPPORT = 200

RECOVERY_BETA1 = (0.5, 0.2, -0.2, 0.0)
RECOVERY_BETA2 = (0.2, -0.3, 0.1, 0.5)
EQUAL_BETA = (0.25, 0.2, -0.35, 0.0)
RECOVERY_FIT_FAMILIES = ("indep", "N", "F", "G0", "J0", "C0", "C90")
POSITIVE_FAMILIES = ("N", "F", "G0", "C0", "J0")
NEGATIVE_FAMILIES = ("N", "F", "C90")


def gen_design(n: int, d: int, seed) -> np.ndarray:
    """``n x d`` matrix of independent U[0, 1] covariates."""
    if n <= 0 or d <= 0:
        raise ConfigError("design dimensions must be positive")
    return np.random.default_rng(seed).uniform(size=(n, d))


def support_bound(lam) -> int:
    """Smallest Y with P(Y_j > Y) below half the tail budget for every rate."""
    lam_max = float(np.max(lam))
    y = int(lam_max)
    while pdtrc(y, lam_max) >= 0.5 * TAIL_MASS:
        y += 1
        if y > MAX_SUPPORT:
            raise ConfigError(f"tail mass bound needs support beyond {MAX_SUPPORT} for rate {lam_max:g}")
    return y


def pair_grid(family, theta, lambda1, lambda2):
    """Renormalised joint pmf on ``[0, Y]^2`` for each rate pair; shape (n, Y+1, Y+1)."""
    spec = get_copula(family)
    lam1 = np.atleast_1d(np.asarray(lambda1, dtype=float))
    lam2 = np.atleast_1d(np.asarray(lambda2, dtype=float))
    Y = max(support_bound(lam1), support_bound(lam2))
    y = np.arange(Y + 1, dtype=float)
    th = 0.0 if spec.is_independence else theta
    P = _clean(_rect(spec, th, lam1[:, None, None], lam2[:, None, None], y[None, :, None], y[None, None, :]))
    P = P / P.sum(axis=(1, 2), keepdims=True)
    return P


def sample_pairs(family, theta, lambda1, lambda2, rng) -> tuple:
    """One exact draw per rate pair from the truncated, renormalised grid."""
    P = pair_grid(family, theta, lambda1, lambda2)
    n, m, _ = P.shape
    cum = np.cumsum(P.reshape(n, -1), axis=1)
    u = rng.random(n)
    idx = np.minimum((cum < (u * cum[:, -1])[:, None]).sum(axis=1), m * m - 1)
    return idx // m, idx % m


def sample_pair(family, theta, lambda1, lambda2, rng) -> tuple:
    y1, y2 = sample_pairs(family, theta, [lambda1], [lambda2], rng)
    return int(y1[0]), int(y2[0])


def coef_mse(beta_hat, beta_true_1, beta_true_2) -> float:
    """Mean squared error over both margins' coefficients (intercepts included)."""
    if isinstance(beta_hat, CoefBlock):
        b1, b2 = beta_hat.beta1, beta_hat.beta2
    else:
        b1, b2 = (np.asarray(b, dtype=float) for b in beta_hat)
    t1 = np.asarray(beta_true_1, dtype=float)
    t2 = np.asarray(beta_true_2, dtype=float)
    if b1.shape != t1.shape or b2.shape != t2.shape:
        raise StructuralError("estimated and true coefficient vectors differ in length")
    err = np.concatenate([t1 - b1, t2 - b2])
    return math.fsum((err * err).tolist()) / err.size


# ---------------------------------------------------------------------------
# study driver


@dataclass(frozen=True)
class StudyConfig:
    """Simulation study configuration.

    ``settings`` lists the (true family, tau) pairs; when empty it is the
    product of ``families`` and ``tau_grid`` restricted to attainable tau.
    """

    n: int = 250
    replicates: int = 20
    families: tuple = POSITIVE_FAMILIES
    tau_grid: tuple = (0.7,)
    beta_true_1: tuple = RECOVERY_BETA1
    beta_true_2: tuple = RECOVERY_BETA2
    equal_coefficients: bool = False
    seed: int = 0
    fit_families: tuple = RECOVERY_FIT_FAMILIES
    xi: float = 1e9
    settings: tuple = ()
    d: int = 6

    def __post_init__(self):
        if self.n <= 0 or self.replicates <= 0:
            raise ConfigError("n and replicates must be positive")
        if len(self.beta_true_1) != 4 or len(self.beta_true_2) != 4:
            raise ConfigError("true coefficient vectors need an intercept and three slopes")
        if self.equal_coefficients and tuple(self.beta_true_1) != tuple(self.beta_true_2):
            raise ConfigError("equal_coefficients needs identical true vectors")
        for fam, tau in self.resolved_settings():
            if tau not in tau_range(fam) and not (get_copula(fam).is_independence and tau == 0):
                raise ConfigError(f"tau={tau} is not attainable by {fam} (range {tau_range(fam)})")

    def resolved_settings(self) -> list:
        if self.settings:
            return [(get_copula(f).code, float(t)) for f, t in self.settings]
        out = []
        for fam in self.families:
            for tau in self.tau_grid:
                if float(tau) in tau_range(fam):
                    out.append((get_copula(fam).code, float(tau)))
        return out


def recovery_config(tau: float, replicates: int = 20, seed: int = 0, **kw) -> StudyConfig:
    fams = POSITIVE_FAMILIES if tau > 0 else NEGATIVE_FAMILIES
    return StudyConfig(replicates=replicates, families=fams, tau_grid=(tau,), seed=seed, **kw)


def penalty_config(replicates: int = 50, seed: int = 0, tau: float = 0.25, **kw) -> StudyConfig:
    settings = tuple((f, tau) for f in POSITIVE_FAMILIES) + tuple((f, -tau) for f in NEGATIVE_FAMILIES)
    return StudyConfig(replicates=replicates, beta_true_1=EQUAL_BETA, beta_true_2=EQUAL_BETA,
                       equal_coefficients=True, seed=seed, settings=settings, **kw)


def _setting_key(family: str, tau: float) -> tuple:
    return FAMILY_CODES.index(get_copula(family).code), int(round((tau + 1.0) * 1000))


def replicate_data(config: StudyConfig, family: str, tau: float, replicate: int) -> ModelData:
    """Dataset of one replicate; fully determined by (seed, setting, replicate)."""
    X = gen_design(config.n, config.d, np.random.SeedSequence([config.seed, 1, replicate]))
    X1 = np.column_stack([np.ones(config.n), X[:, 0:3]])
    X2 = np.column_stack([np.ones(config.n), X[:, 3:6]])
    lam1 = np.exp(X1 @ np.asarray(config.beta_true_1))
    lam2 = np.exp(X2 @ np.asarray(config.beta_true_2))
    spec = get_copula(family)
    theta = 0.0 if spec.is_independence else theta_from_tau(spec, tau)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2, *_setting_key(family, tau), replicate]))
    y1, y2 = sample_pairs(spec, theta, lam1, lam2, rng)
    names = ("(Intercept)", "x1", "x2", "x3")
    return ModelData(y1, y2, X1, X2, names, ("(Intercept)", "x4", "x5", "x6"))


def _row(config, true_fam, tau, rep, fitted, penalized, res=None, err=""):
    base = dict(true_family=true_fam, fitted_family=fitted, tau=tau, replicate=rep, penalized=penalized)
    if res is None:
        base.update(mse=math.nan, aic=math.nan, theta_hat=math.nan, tau_hat=math.nan, converged=False,
                    effectively_independent=False, max_pair_diff=math.nan, error=err)
    else:
        base.update(mse=coef_mse(res.beta_hat, config.beta_true_1, config.beta_true_2), aic=res.aic,
                    theta_hat=res.theta_hat, tau_hat=res.tau_hat, converged=res.converged,
                    effectively_independent=res.effectively_independent, max_pair_diff=res.max_pair_diff,
                    error="")
    return base


def run_replicate(config: StudyConfig, family: str, tau: float, replicate: int) -> list:
    """All fits of one replicate; failures become rows with an error message."""
    data = replicate_data(config, family, tau, replicate)
    rows = []
    opts = SolverOptions()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if config.equal_coefficients:
            try:
                unp = fit(family, data, opts)
                rows.append(_row(config, family, tau, replicate, family, False, unp))
                pen = fit_penalized(family, data, SolverOptions(xi=config.xi), start=unp)
                rows.append(_row(config, family, tau, replicate, family, True, pen))
            except JointCountError as exc:
                rows.append(_row(config, family, tau, replicate, family, False, err=str(exc)))
        else:
            for cand in config.fit_families:
                try:
                    res = fit(cand, data, opts)
                    rows.append(_row(config, family, tau, replicate, get_copula(cand).code, False, res))
                except JointCountError as exc:
                    rows.append(_row(config, family, tau, replicate, get_copula(cand).code, False, err=str(exc)))
    return rows


def _run_task(args):
    return run_replicate(*args)


@dataclass
class StudyResult:
    config: StudyConfig
    results: pd.DataFrame

    def aic_confusion(self, tau: float | None = None) -> pd.DataFrame:
        """Counts of the AIC-selected family per true family."""
        df = self.results[~self.results["penalized"] & self.results["aic"].notna()]
        if tau is not None:
            df = df[np.isclose(df["tau"], tau)]
        picks = (
            df.sort_values(["aic", "fitted_family"], kind="mergesort")
            .groupby(["true_family", "tau", "replicate"], sort=True)
            .head(1)
        )
        cols = [get_copula(f).code for f in self.config.fit_families]
        tab = pd.crosstab(picks["true_family"], picks["fitted_family"]).reindex(columns=cols, fill_value=0)
        order = [f for f, _ in self.config.resolved_settings() if f in tab.index]
        return tab.reindex(list(dict.fromkeys(order)))

    def summary(self) -> pd.DataFrame:
        g = self.results.groupby(["true_family", "tau", "fitted_family", "penalized"], sort=True)
        return g.agg(
            median_mse=("mse", "median"),
            mean_mse=("mse", "mean"),
            n=("mse", "count"),
            n_converged=("converged", "sum"),
            n_independent=("effectively_independent", "sum"),
        ).reset_index()

    def plot_quantiles(self) -> pd.DataFrame:
        """Five-number summaries of the MSE per boxplot group."""
        g = self.results.groupby(["true_family", "tau", "fitted_family", "penalized"], sort=True)["mse"]
        q = g.quantile([0.0, 0.25, 0.5, 0.75, 1.0]).unstack()
        q.columns = ["min", "q1", "median", "q3", "max"]
        return q.reset_index()

    def penalty_pairs(self) -> pd.DataFrame:
        df = self.results
        keys = ["true_family", "tau", "replicate"]
        unp = df[~df["penalized"]].set_index(keys)["mse"]
        pen = df[df["penalized"]].set_index(keys)["mse"]
        out = pd.DataFrame({"mse_unpenalized": unp, "mse_penalized": pen}).dropna().reset_index()
        out["penalized_better"] = out["mse_penalized"] < out["mse_unpenalized"]
        return out


def run_study(config: StudyConfig, workers: int = 1) -> StudyResult:
    """Run every (setting, replicate) task; row order does not depend on ``workers``."""
    tasks = [(config, f, t, r) for f, t in config.resolved_settings() for r in range(config.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    df = pd.DataFrame([row for chunk in chunks for row in chunk])
    df = df.sort_values(["true_family", "tau", "replicate", "fitted_family", "penalized"], kind="mergesort")
    return StudyResult(config, df.reset_index(drop=True))


# ---------------------------------------------------------------------------
# synthetic tournament data with a matched-covariate layout


_TEAMS = (
    ("ARG", "CONMEBOL"), ("AUS", "AFC"), ("BEL", "UEFA"), ("BRA", "CONMEBOL"), ("CMR", "CAF"),
    ("CAN", "CONCACAF"), ("CHI", "CONMEBOL"), ("COL", "CONMEBOL"), ("CRC", "CONCACAF"), ("CRO", "UEFA"),
    ("DEN", "UEFA"), ("ECU", "CONMEBOL"), ("EGY", "CAF"), ("ENG", "UEFA"), ("ESP", "UEFA"),
    ("FRA", "UEFA"), ("GER", "UEFA"), ("GHA", "CAF"), ("GRE", "UEFA"), ("IRN", "AFC"),
    ("ITA", "UEFA"), ("CIV", "CAF"), ("JPN", "AFC"), ("KOR", "AFC"), ("KSA", "AFC"),
    ("MAR", "CAF"), ("MEX", "CONCACAF"), ("NED", "UEFA"), ("NGA", "CAF"), ("PAN", "CONCACAF"),
    ("PAR", "CONMEBOL"), ("PER", "CONMEBOL"), ("POL", "UEFA"), ("POR", "UEFA"), ("RUS", "UEFA"),
    ("SEN", "CAF"), ("SRB", "UEFA"), ("SUI", "UEFA"), ("SWE", "UEFA"), ("TUN", "CAF"),
    ("URU", "CONMEBOL"), ("USA", "CONCACAF"), ("HON", "CONCACAF"), ("ALG", "CAF"), ("NZL", "AFC"),
)

WORLDCUP_YEARS = (2002, 2006, 2010, 2014, 2018)
WORLDCUP_COVARIATES = ("Age", "Rank", "Oddset", "GDP", "Host", "Confed")
# shared true coefficients for both teams (intercept, Age, Rank, Oddset, GDP, Host,
# ConfedCAF, ConfedCONCACAF, ConfedCONMEBOL, ConfedUEFA) followed by Knockout
WORLDCUP_BETA = (0.9, -0.05, -0.006, 2.0, 0.04, 0.35, 0.05, 0.05, 0.25, 0.2)
WORLDCUP_KNOCKOUT = -0.3


def _team_covariates(rng, year: int) -> pd.DataFrame:
    idx = np.sort(rng.choice(len(_TEAMS), size=32, replace=False))
    teams = [_TEAMS[i] for i in idx]
    strength = rng.normal(size=32)
    order = np.argsort(-strength)
    rank = np.empty(32, dtype=int)
    rank[order] = np.sort(rng.choice(np.arange(1, 61), size=32, replace=False))
    raw = np.exp(1.2 * strength)
    oddset = raw / raw.sum()
    host = np.zeros(32, dtype=int)
    host[rng.integers(32)] = 1
    return pd.DataFrame({
        "WorldCup": year,
        "Team": [t for t, _ in teams],
        "Confed": [c for _, c in teams],
        "Age": np.round(rng.normal(27.0, 1.2, 32), 1),
        "Rank": rank,
        "Oddset": np.round(oddset, 4),
        "GDP": np.round(rng.lognormal(2.0, 0.8, 32), 2),
        "Host": host,
    })


def _pairings(rng) -> list:
    """Group stage (8 groups of 4, 48 matches) and 16 knockout matches."""
    out = []
    teams = rng.permutation(32)
    for g in range(8):
        grp = teams[4 * g:4 * g + 4]
        for a in range(4):
            for b in range(a + 1, 4):
                out.append((grp[a], grp[b], 0))
    for _ in range(16):
        a, b = rng.choice(32, size=2, replace=False)
        out.append((a, b, 1))
    return out


def _linear(beta, cov_row, knockout) -> float:
    conf = [cov_row["Confed"] == c for c in ("CAF", "CONCACAF", "CONMEBOL", "UEFA")]
    x = np.array([1.0, cov_row["Age"] - 27.0, cov_row["Rank"], cov_row["Oddset"], cov_row["GDP"] / 10.0,
                  cov_row["Host"], *map(float, conf)])
    return float(np.asarray(beta) @ x + WORLDCUP_KNOCKOUT * knockout - 0.6)


def worldcup_model_text(family: str = "F", xi: float = 1e9) -> str:
    m1 = ", ".join(f"{c}1" for c in WORLDCUP_COVARIATES) + ", Knockout"
    m2 = ", ".join(f"{c}2" for c in WORLDCUP_COVARIATES) + ", Knockout"
    return (
        "# bivariate Poisson model for matched tournament data\n"
        "response1 = y1\nresponse2 = y2\n"
        f"margin1_covariates = {m1}\nmargin2_covariates = {m2}\n"
        f"copula = {family}\ncopula_equation = ~ 1\nlinear_equal = true\nxi = {xi:g}\n"
    )


def make_worldcup_data(seed: int = 2019, family: str = "F", tau: float = 0.1, margin: float = 0.07,
                       odds_noise: float = 0.25):
    """Synthetic five-tournament match table and matching bookmaker odds.

    Both teams share one coefficient vector.  Odds are the true three-way
    probabilities perturbed multiplicatively on the log scale, renormalised
    and loaded with the bookmaker ``margin``.

    Returns
    -------
    matches, odds : DataFrame
    """
    from jointcount.inference import grid_from_rates, three_way

    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    spec = get_copula(family)
    theta = 0.0 if spec.is_independence else theta_from_tau(spec, tau)
    rows = []
    odds_rows = []
    mid = 0
    for year in WORLDCUP_YEARS:
        cov = _team_covariates(rng, year)
        for a, b, ko in _pairings(rng):
            ca, cb = cov.iloc[a], cov.iloc[b]
            lam1 = math.exp(_linear(WORLDCUP_BETA, ca, ko))
            lam2 = math.exp(_linear(WORLDCUP_BETA, cb, ko))
            y1, y2 = sample_pair(spec, theta, lam1, lam2, rng)
            mid += 1
            rec = {"match_id": mid, "y1": y1, "y2": y2, "Team1": ca["Team"], "Team2": cb["Team"],
                   "WorldCup": year, "Knockout": ko}
            for c in WORLDCUP_COVARIATES:
                rec[f"{c}1"] = ca[c]
                rec[f"{c}2"] = cb[c]
            rows.append(rec)
            p = three_way(grid_from_rates(spec, theta, lam1, lam2)).normalized().as_array()
            q = p * np.exp(rng.normal(0.0, odds_noise, 3))
            q = q / q.sum()
            o = np.round(1.0 / (q * (1.0 + margin)), 2)
            odds_rows.append({"match_id": mid, "odds_win": max(o[0], 1.01), "odds_draw": max(o[1], 1.01),
                              "odds_loss": max(o[2], 1.01)})
    cols = ["match_id", "y1", "y2", "Team1", "Team2", "WorldCup"]
    cols += [f"{c}{j}" for c in WORLDCUP_COVARIATES for j in (1, 2)] + ["Knockout"]
    return pd.DataFrame(rows)[cols], pd.DataFrame(odds_rows)
