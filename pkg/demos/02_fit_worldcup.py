"""Fit the bundled synthetic World Cup data with and without the paired penalty.

Run: python3 demos/02_fit_worldcup.py
"""

import warnings

from jointcount.cli import bundled_path, coefficient_table
from jointcount.data import load_matches, parse_model_spec
from jointcount.inference import aic_rank
from jointcount.solver import SolverOptions, fit, fit_penalized

warnings.simplefilter("ignore", RuntimeWarning)

model = parse_model_spec(bundled_path("worldcup_model.txt"))
data = model.design(load_matches(bundled_path("worldcup_synthetic.csv"), model))
print(f"{data.n} matches, covariates: {', '.join(model.margin1.covariate_columns)}")

fits = [fit(code, data) for code in ("indep", "N", "F", "C0", "G0")]
for res in sorted(fits, key=lambda r: r.aic):
    print(f"{res.family:>5}  AIC {res.aic:9.2f}  tau {res.tau_hat:+.3f}  converged {res.converged}")
print("AIC order:", " < ".join(r.family for r in aic_rank(fits)))

plain = fit("F", data)
pen = fit_penalized("F", data, SolverOptions(xi=1e9))
print(f"\nFrank, unpenalised: max |beta1 - beta2| = {plain.max_pair_diff:.3f}")
print(f"Frank, xi = 1e9:     max |beta1 - beta2| = {pen.max_pair_diff:.2e}")
print(coefficient_table(pen).to_string(index=False))
