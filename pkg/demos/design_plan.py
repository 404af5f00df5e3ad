"""
A nearly optimal second capture
===============================

Fit a pilot on a uniform first capture, build the plan for the rest of the
data and look at where the sampling effort goes.
"""

import numpy as np

from elwsub import build_plan, pilot_fit
from elwsub.harness import example_family, generate_example

N, r0, r = 50_000, 200, 1000
data = generate_example("logistic", 1, N, seed=1)
family = example_family("logistic", 1)

alpha10 = r0 / N
alpha0 = 1 - (1 - alpha10) * (1 - r / N)
pilot_idx = np.flatnonzero(np.random.default_rng(1).random(N) < alpha10)
y, X = data.rows(pilot_idx)

pilot = pilot_fit(family, y, X, alpha0, criterion="A")
print("pilot estimate", np.round(pilot.theta_pilot, 3))

plan = build_plan(pilot, data.response, data.covariates, None, alpha10)
print(f"gamma {plan.gamma:.4f}")
print(f"target alpha0 {alpha0:.5f}, mean phi over all units {plan.realized_alpha0:.5f}")
print("phi quantiles", np.round(np.quantile(plan.phi_e, [0, .25, .5, .75, .99, 1]), 4))

# units far from the decision boundary carry little information
eta = data.covariates @ pilot.theta_pilot
for lo, hi in [(0, 1), (1, 3), (3, np.inf)]:
    band = (np.abs(eta) >= lo) & (np.abs(eta) < hi)
    print(f"|eta| in [{lo}, {hi}): {band.sum():6d} units, mean phi {plan.phi_e[band].mean():.4f}")
