"""Poisson margins with a log link."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, pdtr, xlogy

from jointcount.errors import DomainError, StructuralError


class Distribution(str, Enum):
    POISSON = "poisson"


class Link(str, Enum):
    LOG = "log"


@dataclass(frozen=True)
class MarginSpec:
    """Covariates of one margin; the intercept is implicit."""

    covariate_columns: tuple = ()
    distribution: Distribution = Distribution.POISSON
    link: Link = Link.LOG

    def __post_init__(self):
        cols = tuple(self.covariate_columns)
        if len(set(cols)) != len(cols):
            raise StructuralError(f"duplicate covariate columns: {cols}")
        object.__setattr__(self, "covariate_columns", cols)

    @property
    def p(self) -> int:
        return len(self.covariate_columns)


def _check_rate(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)):
        raise DomainError("Poisson rate must be positive")
    return lam


def poisson_logpmf(lam, y):
    """log P(Y = y) for Y ~ Poisson(lam); -inf for y < 0."""
    lam = _check_rate(lam)
    y = np.asarray(y, dtype=float)
    with np.errstate(invalid="ignore"):
        out = xlogy(y, lam) - lam - gammaln(y + 1.0)
    return np.where(y < 0, -np.inf, out)


def poisson_pmf(lam, y):
    """Poisson mass evaluated in log space."""
    out = np.exp(poisson_logpmf(lam, y))
    return float(out) if np.ndim(out) == 0 else out


def poisson_cdf(lam, y):
    """P(Y <= y); exactly 0 for y = -1 (and any negative y)."""
    lam = _check_rate(lam)
    y = np.asarray(y, dtype=float)
    out = np.where(y < 0, 0.0, pdtr(np.maximum(np.floor(y), 0.0), lam))
    return float(out) if out.ndim == 0 else out


def poisson_quantile(lam: float, u: float, max_count: int = 100_000) -> int:
    """Smallest y with cdf(lam, y) >= u."""
    lam = float(_check_rate(lam))
    if not 0.0 < u < 1.0:
        raise DomainError("quantile level must lie in (0, 1)")
    # start near the mean and walk; the cap bounds the search
    y = max(0, int(math.floor(lam)) - 1)
    while y > 0 and poisson_cdf(lam, y - 1) >= u:
        y -= 1
    while poisson_cdf(lam, y) < u:
        y += 1
        if y > max_count:
            raise DomainError(f"quantile search exceeded {max_count} for lam={lam}, u={u}")
    return y


def rate_from_predictor(x, beta):
    """lambda = exp(x^T beta); ``x`` includes the intercept slot."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.shape[-1] != beta.shape[0]:
        raise StructuralError(f"design has {x.shape[-1]} columns but beta has {beta.shape[0]} entries")
    out = np.exp(x @ beta)
    return float(out) if np.ndim(out) == 0 else out
