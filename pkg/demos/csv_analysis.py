"""
Subsampling a CSV file
======================

Write a Poisson regression dataset to disk, then run the comparison on it
exactly as for real data.
"""

import tempfile
from pathlib import Path

import numpy as np

from elwsub import parse_family
from elwsub.harness import SimConfig, analyze_csv

rng = np.random.default_rng(3)
N = 20_000
X = rng.normal(size=(N, 3))
y = rng.poisson(np.exp(0.5 + X @ [0.4, -0.3, 0.2]))

path = Path(tempfile.mkdtemp()) / "counts.csv"
np.savetxt(path, np.column_stack([y, X]), delimiter=",", header="count,x1,x2,x3",
           comments="", fmt="%.6g")

cfg = SimConfig(N=N, r0=200, r_values=(400, 800), repetitions=20, seed=3)
res = analyze_csv(path, parse_family("poisson"), cfg, response="count", intercept=True,
                  standardize_response=False)
print("full-data fit", res.theta_full.round(3))
for (est, r), cell in sorted(res.cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
    print(f"r={r:4d} {est:>5}: MSE {cell['mse']:.2e}, mean n {cell['mean_n']:.0f}")
