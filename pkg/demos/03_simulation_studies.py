"""Small versions of the two simulation studies (family recovery and penalty benefit).

The full-size runs are ``jointcount simulate recovery --replicates 50`` and
``jointcount simulate penalty --replicates 50``.

Run: python3 demos/03_simulation_studies.py
"""

import warnings

from jointcount.simulation import penalty_config, recovery_config, run_study

warnings.simplefilter("ignore", RuntimeWarning)

print("AIC selection with strong dependence (tau = 0.7, 8 replicates):")
rec = run_study(recovery_config(0.7, replicates=8, seed=3))
print(rec.aic_confusion().to_string())

print("\nPenalised vs unpenalised coefficient MSE (equal true coefficients, 8 replicates):")
pen = run_study(penalty_config(replicates=8, seed=3))
pairs = pen.penalty_pairs()
share = pairs.groupby(["true_family", "tau"])["penalized_better"].mean()
print(share.to_string())
