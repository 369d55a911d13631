"""Rejection frequency of the true null in one cell of the simulation design.

    python3 demos/size_cell.py [n] [rho] [tau] [replications]
"""

import sys

from sninfer import dgp, harness

n = int(sys.argv[1]) if len(sys.argv) > 1 else 200
rho = float(sys.argv[2]) if len(sys.argv) > 2 else 0.9
tau = float(sys.argv[3]) if len(sys.argv) > 3 else 0.5
reps = int(sys.argv[4]) if len(sys.argv) > 4 else 500

cfg = harness.ExperimentConfig(dgp=dgp.DgpConfig(n=n, rho=rho), tau=tau,
                               methods=("sn", "iid", "hac"), replications=reps)
table = harness.run_size_experiment(cfg)
for row in table.rows:
    print(f"{row.method:>4}: {row.rejection_pct:5.1f}%  (MC s.e. {row.mc_se_pct:.1f})")
