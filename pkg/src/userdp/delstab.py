"""Local-deletion DP checks and the DelStab propose-test-release transformation.

DelStab turns an item-level DP algorithm ``A`` on ``n - 4 kappa`` users into a
user-level DP algorithm on ``n`` users:

1. draw ``R1`` from the truncated discrete Laplace on ``{0, ..., 2 kappa}``;
2. collect the stable sets: ``S`` with ``|S| = R1`` such that ``A`` is
   ``(4 kappa - R1, eps_bar, delta_bar)``-LDDP at ``x_{-S}``;
3. output bottom if there are none, otherwise pick ``S`` uniformly, a
   superset ``T`` of size ``4 kappa`` uniformly, and release ``A(x_{-T})``.

For :class:`CountSummaryMechanism` both the sampler and the exact output law
work on summary compositions (how many removed users carry each summary value)
instead of explicit subsets, which keeps audits polynomial.
"""

from __future__ import annotations

import itertools
import math
import os
from functools import lru_cache

import numpy as np

from .calculus import DelStabParams, delstab_params
from .core import (
    BudgetExceededError,
    Dataset,
    FiniteDistribution,
    PrivacyParams,
    as_generator,
    sample_index,
)
from .mechanisms import CountSummaryMechanism, ExactMechanism
from .noise import tdlap_pmf

DEFAULT_BUDGET = int(os.environ.get("USERDP_BUDGET", 2_000_000))


class _Bottom:
    """The rejection outcome of propose-test-release."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


def pairwise_indist(pmfs: np.ndarray, pp: PrivacyParams) -> np.ndarray:
    """Boolean matrix ``ok[i, j]``: rows ``i`` and ``j`` are ``(eps, delta)``-indistinguishable."""
    pmfs = np.atleast_2d(pmfs)
    k = pmfs.shape[0]
    scale = math.exp(pp.epsilon)
    hs = np.empty((k, k))
    for i in range(k):
        diff = pmfs[i][None, :] - scale * pmfs
        hs[i] = np.where(diff > 0, diff, 0.0).sum(axis=1)
    return (hs <= pp.delta) & (hs.T <= pp.delta)


def _all_indist(pmfs: list[FiniteDistribution], pp: PrivacyParams) -> bool:
    if len(pmfs) <= 1:
        return True
    uniq = {p.masses.tobytes(): p.masses for p in pmfs}
    if len(uniq) <= 1:
        return True
    return bool(pairwise_indist(np.stack(list(uniq.values())), pp).all())


def removable_sums(values: np.ndarray, r: int, max_value: int) -> np.ndarray:
    """Sums achievable by removing exactly ``r`` of the given nonnegative integers.

    Dynamic programme over users; returns the sorted achievable sums.
    """
    n = len(values)
    if r > n:
        return np.zeros(0, dtype=np.int64)
    width = max_value * r + 1
    reach = np.zeros((r + 1, width), dtype=bool)
    reach[0, 0] = True
    for v in values:
        v = int(v)
        for c in range(min(r, n) - 1, -1, -1):
            row = reach[c]
            if v == 0:
                reach[c + 1] |= row
            else:
                reach[c + 1, v:] |= row[:-v] if v < width else False
    return np.flatnonzero(reach[r])


def lddp_check(
    mech: ExactMechanism,
    ds: Dataset,
    r: int,
    pp: PrivacyParams,
    budget: int = DEFAULT_BUDGET,
) -> bool:
    """Is ``mech`` ``(r, eps, delta)``-local-deletion DP at ``ds``?

    Compares ``mech(ds_{-S})`` with ``mech(ds_{-S'})`` for every pair of user subsets of
    size ``r``, in both divergence directions.
    """
    if not 0 <= r <= ds.n:
        raise ValueError(f"r must lie in [0, {ds.n}]")
    if mech.input_users is not None and mech.input_users != ds.n - r:
        raise ValueError(f"mechanism takes {mech.input_users} users but n - r = {ds.n - r}")
    if r == 0:
        return True
    if isinstance(mech, CountSummaryMechanism):
        vals = mech.summaries(ds)
        totals = int(vals.sum()) - removable_sums(vals, r, mech.max_summary)
        return _all_indist([mech.table(t) for t in totals], pp)
    count = math.comb(ds.n, r)
    if count > budget:
        raise BudgetExceededError(f"C({ds.n}, {r}) = {count} subsets exceeds budget {budget}")
    outs = [mech(ds.without(S)) for S in itertools.combinations(range(ds.n), r)]
    return _all_indist(outs, pp)


def _compositions(caps: tuple[int, ...], total: int):
    """Vectors ``a`` with ``0 <= a[v] <= caps[v]`` and ``sum(a) == total``."""
    if not caps:
        if total == 0:
            yield ()
        return
    rest_cap = sum(caps[1:])
    for first in range(max(0, total - rest_cap), min(caps[0], total) + 1):
        for tail in _compositions(caps[1:], total - first):
            yield (first,) + tail


def _ways(caps, picks) -> int:
    out = 1
    for c, a in zip(caps, picks):
        out *= math.comb(c, a)
    return out


class DelStab:
    """DelStab wrapped around ``mech`` at user-level target ``pp``.

    ``budget`` bounds explicit subset enumeration for general mechanisms and the
    size of the total-by-total indistinguishability table for count-summary ones.
    """

    def __init__(self, mech: ExactMechanism, pp: PrivacyParams, budget: int = DEFAULT_BUDGET):
        self.mech = mech
        self.pp = pp
        self.params: DelStabParams = delstab_params(pp)
        self.inner_pp = PrivacyParams(self.params.eps_bar, self.params.delta_bar)
        self.noise = tdlap_pmf(self.params.eps_bar, self.params.delta_bar)
        self.budget = budget
        self._ok_totals = None
        self._cache: dict = {}

    @property
    def kappa(self) -> int:
        return self.params.kappa

    @property
    def removed(self) -> int:
        return 4 * self.params.kappa

    def check_input(self, ds: Dataset) -> None:
        if ds.n < self.removed:
            raise ValueError(f"DelStab needs n >= 4 kappa = {self.removed}, got n = {ds.n}")
        if self.mech.input_users is not None and self.mech.input_users != ds.n - self.removed:
            raise ValueError(
                f"mechanism takes {self.mech.input_users} users but n - 4 kappa = {ds.n - self.removed}"
            )

    # -- count-summary machinery -------------------------------------------

    def _total_table(self) -> np.ndarray:
        if self._ok_totals is None:
            mech = self.mech
            size = mech.max_total + 1
            if size * size > self.budget:
                raise BudgetExceededError(f"{size}^2 total pairs exceeds budget {self.budget}")
            pmfs = np.stack([mech.table(t).masses for t in range(size)])
            self._ok_totals = pairwise_indist(pmfs, self.inner_pp)
        return self._ok_totals

    def _class_counts(self, ds: Dataset):
        key = ("classes", ds)
        if key not in self._cache:
            vals = self.mech.summaries(ds)
            counts = tuple(int(c) for c in np.bincount(vals, minlength=self.mech.max_summary + 1))
            self._cache[key] = (vals, counts)
        return self._cache[key]

    @lru_cache(maxsize=None)
    def _removal_sum_counts(self, remaining: tuple[int, ...], r: int) -> dict[int, int]:
        """Number of ``r``-subsets of a population with class sizes ``remaining``, by removed sum."""
        ways = {(0, 0): 1}
        for v, cap in enumerate(remaining):
            nxt: dict = {}
            for (c, s), w in ways.items():
                for b in range(0, min(cap, r - c) + 1):
                    key = (c + b, s + v * b)
                    nxt[key] = nxt.get(key, 0) + w * math.comb(cap, b)
            ways = nxt
        return {s: w for (c, s), w in ways.items() if c == r}

    def _composition_stable(self, remaining: tuple[int, ...], r: int) -> bool:
        total = sum(v * c for v, c in enumerate(remaining))
        sums = np.array(sorted(self._removal_sum_counts(remaining, r)), dtype=np.int64)
        totals = total - sums
        ok = self._total_table()
        return bool(ok[np.ix_(totals, totals)].all())

    def _stable_compositions(self, ds: Dataset, r1: int) -> list[tuple[tuple[int, ...], int]]:
        """Stable compositions at level ``r1`` and how many subsets realise each."""
        key = ("stable", ds, r1)
        if key not in self._cache:
            _, counts = self._class_counts(ds)
            r_rest = self.removed - r1
            found = []
            for a in _compositions(counts, r1):
                remaining = tuple(c - x for c, x in zip(counts, a))
                if self._composition_stable(remaining, r_rest):
                    found.append((a, _ways(counts, a)))
            self._cache[key] = found
        return self._cache[key]

    # -- general machinery ---------------------------------------------------

    def _stable_subsets(self, ds: Dataset, r1: int) -> list[tuple[int, ...]]:
        key = ("subsets", ds, r1)
        if key not in self._cache:
            r_rest = self.removed - r1
            work = math.comb(ds.n, r1) * math.comb(ds.n - r1, r_rest)
            if work > self.budget:
                raise BudgetExceededError(
                    f"stable-set search needs {work} mechanism evaluations, budget is {self.budget}"
                )
            self._cache[key] = [
                S
                for S in itertools.combinations(range(ds.n), r1)
                if lddp_check(self.mech, ds.without(S), r_rest, self.inner_pp, self.budget)
            ]
        return self._cache[key]

    # -- public API ----------------------------------------------------------

    def stable_levels(self, ds: Dataset, levels=None) -> np.ndarray:
        """``out[r1]``: is the stable set at level ``r1`` nonempty (``r1`` in ``0..2 kappa`` by default)?"""
        self.check_input(ds)
        levels = range(2 * self.kappa + 1) if levels is None else levels
        if isinstance(self.mech, CountSummaryMechanism):
            return np.array([bool(self._stable_compositions(ds, r1)) for r1 in levels])
        return np.array([bool(self._stable_subsets(ds, r1)) for r1 in levels])

    def run(self, ds: Dataset, rng):
        """One execution; returns an output index or :data:`BOTTOM`."""
        self.check_input(ds)
        rng = as_generator(rng)
        r1 = sample_index(np.cumsum(self.noise.masses), rng)
        r_rest = self.removed - r1
        if isinstance(self.mech, CountSummaryMechanism):
            stable = self._stable_compositions(ds, r1)
            if not stable:
                return BOTTOM
            weights = np.array([w for _, w in stable], dtype=np.float64)
            comp, _ = stable[sample_index(np.cumsum(weights), rng)]
            vals, _ = self._class_counts(ds)
            S = []
            for v, a_v in enumerate(comp):
                if a_v:
                    members = np.flatnonzero(vals == v)
                    S.extend(rng.choice(members, size=a_v, replace=False).tolist())
        else:
            stable = self._stable_subsets(ds, r1)
            if not stable:
                return BOTTOM
            S = list(stable[int(rng.integers(len(stable)))])
        chosen = set(S)
        rest = np.array([i for i in range(ds.n) if i not in chosen], dtype=np.int64)
        extra = rng.choice(rest, size=r_rest, replace=False).tolist() if r_rest else []
        T = chosen | set(extra)
        return self.mech(ds.without(T)).sample(rng)

    def distribution(self, ds: Dataset) -> FiniteDistribution:
        """Exact output law; index ``mech.output_size`` is :data:`BOTTOM`."""
        if not isinstance(self.mech, CountSummaryMechanism):
            raise TypeError("exact DelStab laws are only available for CountSummaryMechanism")
        self.check_input(ds)
        mech = self.mech
        out = np.zeros(mech.output_size + 1)
        vals, counts = self._class_counts(ds)
        total = int(vals.sum())
        for r1, p_r1 in enumerate(self.noise.masses):
            stable = self._stable_compositions(ds, r1)
            if not stable:
                out[-1] += p_r1
                continue
            r_rest = self.removed - r1
            n_stable = sum(w for _, w in stable)
            n_supersets = math.comb(ds.n - r1, r_rest)
            acc = np.zeros(mech.output_size)
            for comp, w in stable:
                removed_s = sum(v * a for v, a in enumerate(comp))
                remaining = tuple(c - a for c, a in zip(counts, comp))
                for s, ways in self._removal_sum_counts(remaining, r_rest).items():
                    acc += (w * ways) * mech.table(total - removed_s - s).masses
            out[:-1] += p_r1 * acc / (n_stable * n_supersets)
        return FiniteDistribution(out / out.sum())

    def bottom_probability(self, ds: Dataset) -> float:
        levels = self.stable_levels(ds)
        return float(self.noise.masses[~levels].sum())


def delstab_run(mech: ExactMechanism, ds: Dataset, pp: PrivacyParams, rng, budget: int = DEFAULT_BUDGET):
    return DelStab(mech, pp, budget).run(ds, rng)


def delstab_distribution(
    mech: CountSummaryMechanism, ds: Dataset, pp: PrivacyParams, budget: int = DEFAULT_BUDGET
) -> FiniteDistribution:
    return DelStab(mech, pp, budget).distribution(ds)
