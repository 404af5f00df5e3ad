"""
How big should the second capture be?
=====================================

Use a pilot to pick the subsample size for an MSE bound and for an
absolute-error requirement.
"""

import numpy as np

from elwsub import pilot_fit, size_m1, size_m2
from elwsub.harness import example_family, generate_example
from elwsub.sizing import elw_variance_fn

N, r0 = 50_000, 200
data = generate_example("logistic", 1, N, seed=2)
family = example_family("logistic", 1)
alpha10 = r0 / N
idx = np.flatnonzero(np.random.default_rng(2).random(N) < alpha10)
y, X = data.rows(idx)
pilot = pilot_fit(family, y, X, 2 * alpha10)

# MSE requirement: E||theta_hat - theta||^2 <= C0
for c0 in (0.4, 0.2, 0.1):
    res = size_m1(pilot, alpha10, N, c0)
    print(f"C0 = {c0:4}: n0 = {res.n0:7.1f}, second capture r = {res.r_second:7.1f}")

# accuracy requirement: P(||theta_hat - theta|| <= d) >= 95%
var_fn = elw_variance_fn(pilot, y, X, alpha10, N)
for d in (0.8, 0.6, 0.4):
    res = size_m2(var_fn, N, d, 0.05, r0)
    print(f"d = {d}: n0 = {res.n0:7.1f}, r = {res.r_second:7.1f}, nu = {res.nu_star:.4g}")
