"""Tour of the copula families: Kendall's tau calibration and the joint pmf.

Run: python3 demos/01_copula_families.py
"""

import numpy as np

from jointcount.copulas import FAMILY_CODES, get_copula, tau_from_theta, tau_range, theta_from_tau
from jointcount.joint import joint_pmf

print(f"{'code':>5} {'tau range':>22} {'theta(tau=+-0.3)':>18} {'P(1,1)':>10}")
y = np.arange(3)
for code in FAMILY_CODES:
    spec = get_copula(code)
    if spec.is_independence:
        theta, rng = 0.0, "[0, 0]"
    else:
        r = tau_range(spec)
        rng = str(r)
        tau = 0.3 if r.upper > 0.3 else -0.3
        if tau not in r:
            tau = 0.5 * r.upper
        theta = theta_from_tau(spec, tau)
        assert abs(tau_from_theta(spec, theta) - tau) < 1e-8
    P = joint_pmf(spec, theta, 1.3, 1.1, y[:, None], y[None, :])
    print(f"{code:>5} {rng:>22} {theta:>18.6f} {P[1, 1]:>10.6f}")

# positive dependence puts extra mass on the diagonal of the score grid
for code in ("indep", "F", "C0"):
    th = 0.0 if code == "indep" else theta_from_tau(code, 0.3)
    g = np.arange(21)
    P = joint_pmf(code, th, 1.3, 1.1, g[:, None], g[None, :])
    print(f"{code:>5}: draw probability {np.trace(P):.4f}")
