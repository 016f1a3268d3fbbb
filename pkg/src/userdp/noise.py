"""Shifted, truncated discrete Laplace noise on ``{0, ..., 2 kappa}``."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .calculus import tdlap_kappa
from .core import FiniteDistribution, as_generator, sample_index


@dataclass(frozen=True)
class TDLap:
    epsilon: float
    delta: float

    @property
    def kappa(self) -> int:
        return tdlap_kappa(self.epsilon, self.delta)

    @property
    def pmf(self) -> FiniteDistribution:
        return tdlap_pmf(self.epsilon, self.delta)

    def sample(self, rng) -> int:
        return tdlap_sample(self.epsilon, self.delta, rng)


@lru_cache(maxsize=256)
def _masses(eps: float, delta: float) -> np.ndarray:
    kappa = tdlap_kappa(eps, delta)
    offsets = np.abs(np.arange(2 * kappa + 1) - kappa)
    # Weights for offsets i and -i are computed from the same float, so the pmf is exactly symmetric.
    weights = np.exp(-eps * offsets.astype(np.float64))
    masses = weights / weights.sum()
    masses.setflags(write=False)
    return masses


def tdlap_pmf(eps: float, delta: float) -> FiniteDistribution:
    """Exact pmf, proportional to ``exp(-eps |x - kappa|)`` on ``{0, ..., 2 kappa}``."""
    return FiniteDistribution(_masses(float(eps), float(delta)))


@lru_cache(maxsize=256)
def _cdf(eps: float, delta: float) -> np.ndarray:
    cdf = np.cumsum(_masses(eps, delta))
    cdf.setflags(write=False)
    return cdf


def tdlap_sample(eps: float, delta: float, rng) -> int:
    """One inverse-CDF draw; ``rng`` is a seed or a ``numpy.random.Generator``."""
    return sample_index(_cdf(float(eps), float(delta)), as_generator(rng))
