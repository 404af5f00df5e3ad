"""Two-phase capture-recapture Poisson sampling with seeded generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# fixed stream identifiers keep the pilot draw independent of the plan
STREAMS = {"data": 0, "first": 1, "second": 2, "uniform": 3}


def make_rng(seed: int, stream: str | int = 0) -> np.random.Generator:
    """Counter-based Philox generator for ``(seed, stream)``.

    Monte Carlo repetition ``b`` uses ``seed + b``; each phase of one
    repetition draws from its own stream.
    """
    sid = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence([int(seed) % 2**64, sid])
    return np.random.Generator(np.random.Philox(ss))


def poisson_draw(probabilities, rng=None, uniforms=None) -> np.ndarray:
    """Independent Bernoulli indicators with the given success probabilities.

    Pass ``uniforms`` to reuse one set of U(0,1) variates across several
    plans (common random numbers); otherwise they are drawn from ``rng``.
    """
    p = np.asarray(probabilities, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if uniforms is None:
        if rng is None:
            raise ValueError("need an rng or pre-drawn uniforms")
        uniforms = rng.random(p.shape)
    return uniforms < p


@dataclass
class SamplingPlan:
    alpha10: float
    pi: np.ndarray
    alpha20: float = field(init=False)
    alpha0: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha10 < 1.0:
            raise ValueError("alpha10 must lie in [0, 1)")
        self.pi = np.asarray(self.pi, dtype=float)
        if np.any(self.pi < 0) or np.any(self.pi > 1):
            raise ValueError("second-capture probabilities must lie in [0, 1]")
        self.alpha20 = float(np.mean(self.pi))
        self.alpha0 = 1.0 - (1.0 - self.alpha10) * (1.0 - self.alpha20)

    @classmethod
    def from_sizes(cls, N: int, r0: float, pi=None):
        return cls(r0 / N, np.zeros(N) if pi is None else pi)

    @property
    def phi(self) -> np.ndarray:
        # written so that pi = 0 gives alpha10 and pi = 1 gives 1 exactly
        phi = self.alpha10 + (1.0 - self.alpha10) * self.pi
        return np.where(self.pi >= 1.0, 1.0, phi)


@dataclass
class CaptureSample:
    d1: np.ndarray
    d2: np.ndarray
    phi: np.ndarray

    @property
    def d(self) -> np.ndarray:
        return self.d1 | self.d2

    @property
    def sampled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.d)

    @property
    def pilot_indices(self) -> np.ndarray:
        return np.flatnonzero(self.d1)

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.d))


def first_capture(N: int, alpha10: float, rng=None, uniforms=None) -> np.ndarray:
    return poisson_draw(np.full(N, alpha10), rng, uniforms)


def capture_recapture(N: int, plan: SamplingPlan, seed=None, d1=None,
                      second_uniforms=None) -> CaptureSample:
    """Draw (or complete) a capture-recapture sample under ``plan``.

    ``d1`` may be supplied when the first capture was already taken (the
    pilot is needed to build ``plan``).  A unit caught in both phases is
    counted once.
    """
    if plan.pi.shape != (N,):
        raise ValueError(f"plan has {plan.pi.size} probabilities for N={N}")
    if d1 is None:
        d1 = first_capture(N, plan.alpha10, make_rng(seed, "first"))
    elif d1.shape != (N,):
        raise ValueError("first-capture indicator has the wrong length")
    rng = None if second_uniforms is not None else make_rng(seed, "second")
    d2 = poisson_draw(plan.pi, rng, second_uniforms)
    return CaptureSample(np.asarray(d1, bool), d2, plan.phi)
