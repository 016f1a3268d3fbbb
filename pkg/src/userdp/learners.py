"""User-level pure-DP learners built on the exponential mechanism."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .core import BudgetExceededError, Dataset, FiniteDistribution, as_generator
from .em import (
    ScoreVector,
    agnostic_family,
    default_tau,
    em_distribution,
    em_select,
    pac_scores,
    pairwise_clipped_scores,
    scheffe_family,
)

# Largest grid cover build_grid_cover will enumerate unless told otherwise.
COVER_BUDGET = 200_000


@dataclass(frozen=True)
class ProbabilisticRepresentation:
    """A distribution over finite hypothesis sets.

    ``sampler(rng)`` returns a nonempty list of hypotheses; ``size_bound`` bounds
    ``ln |H|`` over every set the sampler can return.
    """

    sampler: Callable[[np.random.Generator], list]
    size_bound: float

    def sample(self, rng) -> list:
        hyps = list(self.sampler(as_generator(rng)))
        if not hyps:
            raise ValueError("probabilistic representation produced an empty hypothesis set")
        if math.log(len(hyps)) > self.size_bound + 1e-12:
            raise ValueError(f"sampled {len(hyps)} hypotheses, above exp(size_bound)")
        return hyps

    @classmethod
    def point_mass(cls, concepts: Sequence) -> "ProbabilisticRepresentation":
        """Always returns the whole finite class; size is ``ln |C|``."""
        concepts = list(concepts)
        if not concepts:
            raise ValueError("empty concept class")
        return cls(lambda rng: list(concepts), math.log(len(concepts)))


def threshold_concepts(num_points: int) -> np.ndarray:
    """All thresholds ``c_t(x) = 1[x >= t]`` on ``[num_points]``, ``t = 0 .. num_points``."""
    x = np.arange(num_points)
    return np.stack([(x >= t).astype(np.int64) for t in range(num_points + 1)])


def hypothesis_error(hypothesis, dist: FiniteDistribution) -> float:
    """Probability under a labeled-universe distribution that ``hypothesis`` mislabels the example."""
    labels = np.asarray(hypothesis, dtype=np.int64)
    z = np.arange(len(dist))
    wrong = labels[z // 2] != z % 2
    return float(dist.masses[wrong].sum())


def _truncate_items(ds: Dataset, alpha: float | None) -> Dataset:
    if alpha is None:
        return ds
    keep = max(1, math.floor(1.0 / alpha))
    if ds.m <= keep:
        return ds
    return Dataset(ds.universe_size, ds.users[:, :keep])


def pac_learn(pr: ProbabilisticRepresentation, ds: Dataset, eps: float, rng, alpha: float | None = None):
    """Exponential mechanism over a sampled hypothesis set with the user-clipped PAC score.

    With ``alpha`` given, users holding more than ``1/alpha`` examples keep only the first ``floor(1/alpha)``.
    """
    rng = as_generator(rng)
    hyps = pr.sample(rng)
    if len(hyps) == 1:
        return hyps[0]
    sv = pac_scores(hyps, _truncate_items(ds, alpha))
    return hyps[em_select(sv, eps, rng)]


def hypothesis_select(
    candidates: Sequence[FiniteDistribution],
    ds: Dataset,
    eps: float,
    alpha: float,
    c_tau: float = 1.0,
    rng=None,
) -> int:
    """Index of a candidate chosen by the clipped pairwise Scheffé exponential mechanism."""
    sv = hypothesis_select_scores(candidates, ds, alpha, c_tau)
    return em_select(sv, eps, rng)


def hypothesis_select_scores(candidates, ds: Dataset, alpha: float, c_tau: float = 1.0) -> ScoreVector:
    if len(candidates) < 2:
        raise ValueError("hypothesis selection needs at least two candidates")
    if len(candidates[0]) != ds.universe_size:
        raise ValueError("candidates and dataset must share the universe")
    tau = default_tau(alpha, ds.m, c_tau)
    return pairwise_clipped_scores(scheffe_family(candidates), ds, tau)


# -- grid covers -------------------------------------------------------------


def grid_denominator(k: int, alpha: float) -> int:
    """``ceil(10 k / alpha)``, rounding away float noise when the ratio is an integer."""
    ratio = 10.0 * k / alpha
    nearest = round(ratio)
    return int(nearest) if abs(ratio - nearest) < 1e-9 else math.ceil(ratio)


@dataclass(frozen=True, eq=False)
class GridCover:
    """Every pmf on ``[k]`` whose masses are integer multiples of ``1 / denominator``."""

    k: int
    denominator: int
    counts: np.ndarray

    @property
    def resolution(self) -> float:
        return 1.0 / self.denominator

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.denominator

    def __len__(self) -> int:
        return self.counts.shape[0]

    @property
    def members(self) -> list[FiniteDistribution]:
        return [FiniteDistribution(row) for row in self.masses]

    def member(self, i: int) -> FiniteDistribution:
        return FiniteDistribution(self.counts[i] / self.denominator)

    def index_of(self, counts: Sequence[int]) -> int:
        hit = np.flatnonzero((self.counts == np.asarray(counts)).all(axis=1))
        if hit.size == 0:
            raise KeyError(tuple(counts))
        return int(hit[0])

    def round(self, dist: FiniteDistribution) -> np.ndarray:
        """Largest-remainder apportionment of ``dist`` onto the grid (integer counts)."""
        if len(dist) != self.k:
            raise ValueError("distribution lives on a different domain")
        scaled = dist.masses * self.denominator
        base = np.floor(scaled).astype(np.int64)
        short = self.denominator - int(base.sum())
        order = np.argsort(-(scaled - base), kind="stable")
        base[order[:short]] += 1
        return base

    def nearest(self, dist: FiniteDistribution) -> FiniteDistribution:
        return FiniteDistribution(self.round(dist) / self.denominator)


def cover_size(k: int, denominator: int) -> int:
    return math.comb(denominator + k - 1, k - 1)


@lru_cache(maxsize=32)
def _grid_counts(k: int, denominator: int) -> np.ndarray:
    # Stars and bars: choose k - 1 bar positions among denominator + k - 1 slots.
    rows = []
    for bars in itertools.combinations(range(denominator + k - 1), k - 1):
        edges = (-1,) + bars + (denominator + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    out = np.array(rows, dtype=np.int64).reshape(-1, k)
    out.setflags(write=False)
    return out


def build_grid_cover(
    k: int,
    alpha: float | None = None,
    resolution: float | None = None,
    budget: int = COVER_BUDGET,
) -> GridCover:
    """Grid cover of the simplex on ``[k]``.

    By default the resolution is ``1 / ceil(10 k / alpha)``; pass ``resolution`` (with
    ``1 / resolution`` integral) to build a coarser or finer grid directly.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if resolution is None:
        if alpha is None or not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        denominator = grid_denominator(k, alpha)
    else:
        inv = 1.0 / resolution
        denominator = int(round(inv))
        if denominator < 1 or abs(inv - denominator) > 1e-9:
            raise ValueError("1 / resolution must be a positive integer")
    size = cover_size(k, denominator)
    if size > budget:
        raise BudgetExceededError(f"grid cover has {size} members, budget is {budget}")
    return GridCover(k, denominator, _grid_counts(k, denominator))


def grid_scheffe_scores(cover: GridCover, ds: Dataset, tau: float) -> ScoreVector:
    """Clipped pairwise Scheffé scores over a full grid cover, without the quadratic pair loop.

    For a member ``P`` and any other member ``P'``, the Scheffé set
    ``W = {z : P(z) > P'(z)}`` is a nonempty proper subset of ``supp(P)``, and every
    such subset is realised by some grid member. The per-user comparison sum is
    ``m P(W) - |x_i cap W|``, so the score of ``P`` is the maximum over those subsets
    ``W`` of ``sum_i clip(m P(W) - |x_i cap W|, -tau, tau)``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if ds.universe_size != cover.k:
        raise ValueError("dataset universe must equal the cover domain")
    k, m = cover.k, ds.m
    counts = ds.item_counts()
    support = cover.counts > 0
    best = np.full(len(cover), -np.inf)
    u = np.arange(m + 1, dtype=np.float64)
    for size in range(1, k):
        for subset in itertools.combinations(range(k), size):
            cols = list(subset)
            in_w = counts[:, cols].sum(axis=1)
            hist = np.bincount(in_w, minlength=m + 1).astype(np.float64)
            p_w = cover.counts[:, cols].sum(axis=1) / cover.denominator
            per_user = np.clip(m * p_w[:, None] - u[None, :], -tau, tau)
            value = per_user @ hist
            allowed = support[:, cols].all(axis=1)
            best = np.where(allowed, np.maximum(best, value), best)
    return ScoreVector(best, sensitivity=2.0 * tau)


def learn_discrete_scores(
    ds: Dataset, k: int, alpha: float, c_tau: float = 1.0, cover: GridCover | None = None
) -> tuple[GridCover, ScoreVector]:
    if ds.universe_size != k:
        raise ValueError("dataset universe must be [k]")
    cover = build_grid_cover(k, alpha) if cover is None else cover
    tau = default_tau(alpha, ds.m, c_tau)
    return cover, grid_scheffe_scores(cover, ds, tau)


def learn_discrete_distribution(
    ds: Dataset, k: int, alpha: float, eps: float, c_tau: float = 1.0, cover: GridCover | None = None
) -> FiniteDistribution:
    """Exact law of the index :func:`learn_discrete` selects within the cover."""
    _, sv = learn_discrete_scores(ds, k, alpha, c_tau, cover)
    return em_distribution(sv, eps)


def learn_discrete(
    ds: Dataset,
    k: int,
    alpha: float,
    eps: float,
    c_tau: float = 1.0,
    rng=None,
    cover: GridCover | None = None,
) -> FiniteDistribution:
    """eps-user-level DP estimate of the item distribution on ``[k]``; always a cover member."""
    cover, sv = learn_discrete_scores(ds, k, alpha, c_tau, cover)
    return cover.member(em_select(sv, eps, rng))


def agnostic_pac_learn(
    pr: ProbabilisticRepresentation,
    ds: Dataset,
    eps: float,
    alpha: float,
    c_tau: float = 1.0,
    rng=None,
):
    """Clipped pairwise exponential mechanism with error-difference comparisons."""
    rng = as_generator(rng)
    hyps = pr.sample(rng)
    if len(hyps) == 1:
        return hyps[0]
    cf = agnostic_family(np.stack([np.asarray(h) for h in hyps]))
    if cf.universe_size != ds.universe_size:
        raise ValueError("hypotheses and dataset must share the labeled universe")
    sv = pairwise_clipped_scores(cf, ds, default_tau(alpha, ds.m, c_tau))
    return hyps[em_select(sv, eps, rng)]


# -- trivial item/user reductions -------------------------------------------


def baseline_discard(ds: Dataset) -> Dataset:
    """Keep only each user's first item."""
    if ds.m == 0:
        raise ValueError("users hold no items")
    return Dataset(ds.universe_size, ds.users[:, :1])


def baseline_group(ds: Dataset, m_group: int) -> Dataset:
    """Pool all items (user-major order) and regroup them into users of ``m_group`` items."""
    total = ds.n * ds.m
    if m_group < 1 or total % m_group:
        raise ValueError(f"{total} items cannot be split into users of {m_group}")
    return Dataset(ds.universe_size, ds.users.reshape(total // m_group, m_group))

