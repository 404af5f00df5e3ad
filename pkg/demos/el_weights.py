"""
Empirical likelihood weights by hand
====================================

Draw a sample whose inclusion probabilities vary a lot and compare the
inverse-probability weights with the empirical likelihood weights.
"""

import numpy as np

from elwsub import elw_weights

rng = np.random.default_rng(0)
N = 10_000

# inclusion probabilities between 0.005 and 0.6, some of them tiny
phi = np.clip(rng.lognormal(-3.5, 1.2, N), 0.005, 0.6)
alpha0 = phi.mean()
caught = rng.random(N) < phi
print(f"expected size {N * alpha0:.0f}, realized {caught.sum()}")

ipw = 1 / phi[caught]
ipw /= ipw.sum()
sol = elw_weights(phi[caught], alpha0, N)

# the EL weights satisfy sum p (phi - alpha0) = 0 exactly
print("max IPW weight   ", ipw.max())
print("max EL weight    ", sol.p.max())
print("EL constraint    ", sol.p @ (phi[caught] - alpha0))
print("Newton iterations", sol.iterations, sol.status)

# fewer extreme weights means a larger effective sample size
print("effective size IPW", 1 / np.sum(ipw**2))
print("effective size EL ", 1 / np.sum(sol.p**2))
