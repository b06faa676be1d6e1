"""Randomised quantile residuals as a goodness-of-fit check.

A correctly specified copula model gives residuals close to N(0, 1); a
misspecified margin (here, a missing covariate) does not.

Run: python3 demos/05_residuals.py
"""

import warnings

import numpy as np
from scipy import stats

from jointcount.copulas import theta_from_tau
from jointcount.joint import ModelData
from jointcount.inference import quantile_residuals
from jointcount.simulation import sample_pairs
from jointcount.solver import fit

warnings.simplefilter("ignore", RuntimeWarning)

rng = np.random.default_rng(11)
n = 2000
X = rng.uniform(size=(n, 2))
X1 = np.column_stack([np.ones(n), X[:, 0]])
X2 = np.column_stack([np.ones(n), X[:, 1]])
lam1 = np.exp(0.2 + 1.5 * X1[:, 1])
lam2 = np.exp(0.1 - 1.2 * X2[:, 1])
y1, y2 = sample_pairs("C0", theta_from_tau("C0", 0.3), lam1, lam2, rng)

good = ModelData(y1, y2, X1, X2, ("(Intercept)", "x1"), ("(Intercept)", "x2"))
bad = ModelData(y1, y2, X1[:, :1], X2[:, :1], ("(Intercept)",), ("(Intercept)",))
for label, d in (("well specified", good), ("covariates dropped", bad)):
    r1, r2 = quantile_residuals(fit("C0", d), d, seed=1)
    p = [stats.kstest(r, "norm").pvalue for r in (r1, r2)]
    print(f"{label:>20}: KS p-values {p[0]:.3g}, {p[1]:.3g}")
