"""Finite distributions, user-level datasets, and the divergences between them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Tolerance on sum(masses) == 1 when constructing a distribution.
NORMALIZATION_TOL = 1e-9
# Tolerance used when two quantities should be identical up to rounding.
IDENTITY_TOL = 1e-12


class DomainMismatchError(ValueError):
    """Two distributions (or a distribution and a dataset) live on different domains."""


class BudgetExceededError(RuntimeError):
    """A brute-force computation would exceed its configured budget."""


def as_generator(rng) -> np.random.Generator:
    """Accept an int seed, a SeedSequence or a Generator and return a Generator.

    All randomness in the package flows through numpy's PCG64 bit generator, so
    identical seeds give identical streams.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_index(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of one index from a cumulative mass vector using one uniform."""
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(cdf) - 1)


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability mass function over outcomes ``0 .. len(masses) - 1``."""

    masses: np.ndarray

    def __post_init__(self):
        masses = np.array(self.masses, dtype=np.float64).reshape(-1)
        if masses.size == 0:
            raise ValueError("distribution must have a nonempty domain")
        if not np.all(np.isfinite(masses)):
            raise ValueError("masses must be finite")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        total = float(masses.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"masses sum to {total!r}, not 1")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "FiniteDistribution":
        w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=np.float64)
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total")
        return cls(w / total)

    @classmethod
    def point_mass(cls, size: int, at: int) -> "FiniteDistribution":
        masses = np.zeros(size)
        masses[at] = 1.0
        return cls(masses)

    @classmethod
    def uniform(cls, size: int) -> "FiniteDistribution":
        return cls(np.full(size, 1.0 / size))

    def __len__(self) -> int:
        return self.masses.size

    def __getitem__(self, idx):
        return self.masses[idx]

    def __repr__(self) -> str:
        return f"FiniteDistribution({np.array2string(self.masses, precision=6)})"

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.masses > 0)

    def allclose(self, other: "FiniteDistribution", atol: float = IDENTITY_TOL) -> bool:
        return len(self) == len(other) and bool(np.allclose(self.masses, other.masses, rtol=0, atol=atol))

    def sample(self, rng) -> int:
        return sample_index(np.cumsum(self.masses), as_generator(rng))

    def to_json(self) -> str:
        return json.dumps(self.masses.tolist())

    @classmethod
    def from_json(cls, text: str) -> "FiniteDistribution":
        return cls(json.loads(text))


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` users, each holding ``m`` item indices into a universe of size ``universe_size``."""

    universe_size: int
    users: np.ndarray = field(repr=False)

    def __post_init__(self):
        users = np.array(self.users, dtype=np.int64)
        if users.ndim == 1 and users.size == 0:
            users = users.reshape(0, 0)
        if users.ndim != 2:
            raise ValueError("users must be a rectangular n x m array: every user needs exactly m items")
        if self.universe_size < 1:
            raise ValueError("universe_size must be positive")
        if users.size and (users.min() < 0 or users.max() >= self.universe_size):
            raise ValueError(f"item indices must lie in [0, {self.universe_size})")
        users.setflags(write=False)
        object.__setattr__(self, "users", users)

    @property
    def n(self) -> int:
        return self.users.shape[0]

    @property
    def m(self) -> int:
        return self.users.shape[1]

    def __repr__(self) -> str:
        return f"Dataset(universe_size={self.universe_size}, n={self.n}, m={self.m})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.universe_size == other.universe_size
            and self.users.shape == other.users.shape
            and bool(np.array_equal(self.users, other.users))
        )

    def __hash__(self) -> int:
        return hash((self.universe_size, self.users.shape, self.users.tobytes()))

    def subset(self, keep: Sequence[int]) -> "Dataset":
        """Dataset restricted to the users at positions ``keep`` (in that order)."""
        keep = np.asarray(keep, dtype=np.int64)
        return Dataset(self.universe_size, self.users[keep].reshape(len(keep), self.m))

    def without(self, removed: Iterable[int]) -> "Dataset":
        """``x_{-S}``: drop the users in ``removed``, keeping the others in order."""
        removed = set(int(i) for i in removed)
        return self.subset([i for i in range(self.n) if i not in removed])

    def replace_user(self, i: int, record: Sequence[int]) -> "Dataset":
        users = self.users.copy()
        users[i] = record
        return Dataset(self.universe_size, users)

    def item_counts(self) -> np.ndarray:
        """Per-user histogram over the universe, shape ``(n, universe_size)``."""
        counts = np.zeros((self.n, self.universe_size), dtype=np.int64)
        if self.m:
            rows = np.repeat(np.arange(self.n), self.m)
            np.add.at(counts, (rows, self.users.reshape(-1)), 1)
        return counts

    def to_dict(self) -> dict:
        return {"universe_size": self.universe_size, "m": self.m, "users": self.users.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "Dataset":
        users = obj["users"]
        m = int(obj["m"])
        if any(len(u) != m for u in users):
            raise ValueError("every user must hold exactly m items")
        arr = np.array(users, dtype=np.int64).reshape(len(users), m)
        return cls(int(obj["universe_size"]), arr)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        return cls.from_dict(json.loads(text))

    @classmethod
    def sample(cls, dist: FiniteDistribution, n: int, m: int, rng) -> "Dataset":
        """Draw ``n * m`` i.i.d. items from ``dist``."""
        rng = as_generator(rng)
        users = rng.choice(len(dist), size=(n, m), p=dist.masses)
        return cls(len(dist), users)


@dataclass(frozen=True)
class PrivacyParams:
    """An ``(epsilon, delta)`` pair in nats.

    ``epsilon == 0`` is accepted so that ``(0, 0)`` can act as the identity of
    composition; mechanisms that divide by epsilon check for positivity themselves.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be finite and nonnegative, got {self.epsilon!r}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")

    def __iter__(self):
        return iter((self.epsilon, self.delta))


def _check_same_domain(a: FiniteDistribution, b: FiniteDistribution) -> None:
    if len(a) != len(b):
        raise DomainMismatchError(f"domain sizes differ: {len(a)} vs {len(b)}")


def hockey_stick(a: FiniteDistribution, b: FiniteDistribution, eps: float) -> float:
    """``sum_x [a(x) - e^eps b(x)]_+``."""
    _check_same_domain(a, b)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    diff = a.masses - math.exp(eps) * b.masses
    return float(diff[diff > 0].sum())


def approx_indist(a: FiniteDistribution, b: FiniteDistribution, pp: PrivacyParams) -> bool:
    """True iff both hockey-stick divergences at ``pp.epsilon`` are at most ``pp.delta``."""
    return (
        hockey_stick(a, b, pp.epsilon) <= pp.delta
        and hockey_stick(b, a, pp.epsilon) <= pp.delta
    )


def tv_distance(a: FiniteDistribution, b: FiniteDistribution) -> float:
    _check_same_domain(a, b)
    return 0.5 * float(np.abs(a.masses - b.masses).sum())


def kl_divergence(a: FiniteDistribution, b: FiniteDistribution) -> float:
    """KL(a || b) in nats; ``math.inf`` when a puts mass outside the support of b."""
    _check_same_domain(a, b)
    pa, pb = a.masses, b.masses
    on = pa > 0
    if np.any(pb[on] == 0):
        return math.inf
    return max(0.0, float(np.sum(pa[on] * np.log(pa[on] / pb[on]))))


def chi2_divergence(a: FiniteDistribution, b: FiniteDistribution) -> float:
    """Chi-squared divergence ``sum (a - b)^2 / b``; ``math.inf`` on support violation."""
    _check_same_domain(a, b)
    pa, pb = a.masses, b.masses
    zero = pb == 0
    if np.any(pa[zero] > 0):
        return math.inf
    return float(np.sum((pa[~zero] - pb[~zero]) ** 2 / pb[~zero]))


def max_log_ratio(a: FiniteDistribution, b: FiniteDistribution) -> float:
    """Largest ``|ln a(x) - ln b(x)|`` over outcomes; ``inf`` if the supports differ."""
    _check_same_domain(a, b)
    pa, pb = a.masses, b.masses
    za, zb = pa == 0, pb == 0
    if np.any(za != zb):
        return math.inf
    on = ~za
    return float(np.max(np.abs(np.log(pa[on]) - np.log(pb[on]))))


def clip(lo: float, hi: float, x):
    """``min(hi, max(lo, x))``; works elementwise on arrays."""
    if lo > hi:
        raise ValueError(f"clip bounds reversed: lo={lo} > hi={hi}")
    if isinstance(x, np.ndarray):
        return np.clip(x, lo, hi)
    return min(hi, max(lo, x))
