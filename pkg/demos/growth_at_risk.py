"""Quantile and left-tail shortfall regressions on a synthetic growth-at-risk panel.

The series mimic quarterly GDP growth driven by a lagged financial
conditions index; no external data are used.
"""

import numpy as np

from sninfer import harness
from sninfer.data import TimeSeriesDataset

rng = np.random.default_rng(42)
T = 188
nfci = np.zeros(T)
gdp = np.zeros(T)
for t in range(1, T):
    nfci[t] = 0.85 * nfci[t - 1] + 0.4 * rng.standard_normal()
    scale = 1.5 + 0.8 * max(nfci[t - 1], -1.0)
    gdp[t] = 2.0 + 0.3 * gdp[t - 1] - 1.5 * nfci[t - 1] + scale * rng.standard_normal()

# regress growth on a constant, lagged NFCI and lagged growth
X = np.column_stack([np.ones(T - 1), nfci[:-1], gdp[:-1]])
data = TimeSeriesDataset(gdp[1:], X, ("const", "nfci_lag", "gdp_lag"), "gdp")
print(f"n={data.n}, k={data.k}")

rows = harness.run_empirical(data, [0.1, 0.5, 0.9], "quantile")
rows += harness.run_empirical(data, [0.1], "es", side="lower")
print(f"{'target':>8} {'tau':>4} {'coef':>9} {'estimate':>9}  95% SN interval       DQ p")
for r in rows:
    dq = "" if np.isnan(r.dq_p_value) else f"{r.dq_p_value:.3f}"
    print(f"{r.target:>8} {r.tau:4.1f} {r.coefficient:>9} {r.estimate:9.3f}  "
          f"[{r.ci_low:7.3f}, {r.ci_high:7.3f}]  {dq}")
