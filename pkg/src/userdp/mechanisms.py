"""Mechanisms exposed as exact maps from datasets to output distributions."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .core import BudgetExceededError, Dataset, FiniteDistribution, hockey_stick
from .em import em_distribution, pac_scores


class ExactMechanism:
    """A randomized algorithm given by its exact output law.

    ``fn(ds)`` must return a :class:`FiniteDistribution` over ``output_size``
    outcomes and must be deterministic as a map to distributions.
    """

    def __init__(
        self,
        fn: Callable[[Dataset], FiniteDistribution],
        output_size: int,
        input_users: int | None = None,
        name: str = "mechanism",
    ):
        self._fn = fn
        self.output_size = output_size
        self.input_users = input_users
        self.name = name

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, output_size={self.output_size}, input_users={self.input_users})"

    def check_arity(self, ds: Dataset) -> None:
        if self.input_users is not None and ds.n != self.input_users:
            raise ValueError(f"{self.name} expects {self.input_users} users, got {ds.n}")

    def __call__(self, ds: Dataset) -> FiniteDistribution:
        self.check_arity(ds)
        out = self._fn(ds)
        if len(out) != self.output_size:
            raise ValueError(f"{self.name} returned {len(out)} outcomes, expected {self.output_size}")
        return out

    def divergences(self, a: Dataset, b: Dataset, eps: float) -> tuple[float, float]:
        """Hockey-stick divergences of the outputs on ``a`` and ``b``, in both directions."""
        pa, pb = self(a), self(b)
        return hockey_stick(pa, pb, eps), hockey_stick(pb, pa, eps)


class CountSummaryMechanism(ExactMechanism):
    """Mechanism whose output law depends on the data only through ``sum_i summary(user_i)``.

    ``summary`` maps one user's record to an integer in ``[0, max_summary]`` and
    ``table(total)`` gives the output law for a summed total.
    """

    def __init__(
        self,
        summary: Callable[[Sequence[int]], int],
        table: Callable[[int], FiniteDistribution],
        output_size: int,
        input_users: int,
        max_summary: int,
        name: str = "count-summary",
    ):
        self.summary = summary
        self.max_summary = max_summary
        self._table = lru_cache(maxsize=None)(table)
        super().__init__(self._eval, output_size, input_users, name)

    def table(self, total: int) -> FiniteDistribution:
        return self._table(int(total))

    def summaries(self, ds: Dataset) -> np.ndarray:
        vals = np.array([int(self.summary(u)) for u in ds.users], dtype=np.int64)
        if vals.size and (vals.min() < 0 or vals.max() > self.max_summary):
            raise ValueError(f"user summaries must lie in [0, {self.max_summary}]")
        return vals

    def _eval(self, ds: Dataset) -> FiniteDistribution:
        return self.table(int(self.summaries(ds).sum()))

    @property
    def max_total(self) -> int:
        return self.max_summary * self.input_users

    @classmethod
    def from_item_weights(
        cls,
        item_weights: Sequence[int],
        tables: Sequence[Sequence[float]],
        input_users: int,
        m: int,
        name: str = "count-summary",
    ) -> "CountSummaryMechanism":
        """Summary is the sum of per-item integer weights; ``tables[t]`` is the law at total ``t``."""
        weights = np.asarray(item_weights, dtype=np.int64)
        if np.any(weights < 0):
            raise ValueError("item weights must be nonnegative")
        dists = [FiniteDistribution(t) for t in tables]
        max_summary = int(weights.max()) * m
        if len(dists) < max_summary * input_users + 1:
            raise ValueError(f"need a table entry for every total 0..{max_summary * input_users}")
        out = len(dists[0])
        return cls(
            lambda rec: int(weights[np.asarray(rec)].sum()),
            lambda t: dists[t],
            output_size=out,
            input_users=input_users,
            max_summary=max_summary,
            name=name,
        )


def constant_mechanism(pmf, input_users: int | None = None) -> ExactMechanism:
    dist = pmf if isinstance(pmf, FiniteDistribution) else FiniteDistribution(pmf)
    return ExactMechanism(lambda ds: dist, len(dist), input_users, name="constant")


def first_item_mechanism(universe_size: int, input_users: int | None = None) -> ExactMechanism:
    """Releases the first user's first item verbatim."""
    return ExactMechanism(
        lambda ds: FiniteDistribution.point_mass(universe_size, int(ds.users[0, 0])),
        universe_size,
        input_users,
        name="first-item",
    )


def randomized_response_bit(eps: float) -> ExactMechanism:
    """Single-bit randomized response on the first user's first item; flip probability ``1/(1+e^eps)``."""
    keep = 1.0 / (1.0 + math.exp(-eps))

    def fn(ds):
        bit = int(ds.users[0, 0])
        masses = np.array([keep, 1.0 - keep]) if bit == 0 else np.array([1.0 - keep, keep])
        return FiniteDistribution(masses)

    return ExactMechanism(fn, 2, None, name=f"rr-bit({eps:g})")


def _rr_count_law(total: int, n_items: int, keep: float) -> FiniteDistribution:
    ones = binom.pmf(np.arange(total + 1), total, keep)
    zeros_flipped = binom.pmf(np.arange(n_items - total + 1), n_items - total, 1.0 - keep)
    law = np.convolve(ones, zeros_flipped)
    return FiniteDistribution(law / law.sum())


def randomized_response_count(eps0: float, input_users: int, m: int) -> CountSummaryMechanism:
    """Binary items, each reported through eps0-randomized response; releases the count of reported ones.

    Item-level ``eps0``-DP. The law depends only on the number of 1-items, so it is
    a count-summary mechanism with per-user summary in ``[0, m]``.
    """
    keep = 1.0 / (1.0 + math.exp(-eps0))
    n_items = input_users * m
    return CountSummaryMechanism(
        summary=lambda rec: int(np.sum(rec)),
        table=lambda t: _rr_count_law(t, n_items, keep),
        output_size=n_items + 1,
        input_users=input_users,
        max_summary=m,
        name=f"rr-count(eps0={eps0:g})",
    )


class RandomizedResponseVector(ExactMechanism):
    """Reports every (binary, one-item) user bit through ``eps0``-randomized response.

    The output is the whole vector of noisy bits. Dense output laws are only built
    for ``input_users <= dense_limit``; divergences use a closed form that needs only
    the number of coordinates in which the two inputs differ.
    """

    def __init__(self, eps0: float, input_users: int, dense_limit: int = 16):
        self.eps0 = eps0
        self.keep = 1.0 / (1.0 + math.exp(-eps0))
        self.dense_limit = dense_limit
        super().__init__(self._dense, 2**input_users, input_users, name=f"rr-vector(eps0={eps0:g})")

    def _dense(self, ds: Dataset) -> FiniteDistribution:
        n = ds.n
        if n > self.dense_limit:
            raise BudgetExceededError(f"dense output over 2^{n} outcomes exceeds the limit 2^{self.dense_limit}")
        bits = ds.users[:, 0]
        law = np.ones(1)
        # Output index uses user 0 as the most significant bit.
        for b in bits:
            law = np.kron(law, np.array([self.keep, 1 - self.keep]) if b == 0 else np.array([1 - self.keep, self.keep]))
        return FiniteDistribution(law)

    def divergence_for_distance(self, d: int, eps: float) -> float:
        """Hockey-stick divergence between outputs on inputs at Hamming distance ``d``."""
        if d == 0:
            return 0.0
        j = np.arange(d + 1)
        log_c = gammaln(d + 1) - gammaln(j + 1) - gammaln(d - j + 1)
        lp, lq = math.log(self.keep), math.log1p(-self.keep)
        log_a = log_c + j * lp + (d - j) * lq
        log_b = log_c + (d - j) * lp + j * lq
        terms = np.exp(log_a) - np.exp(eps + log_b)
        return float(terms[terms > 0].sum())

    def divergences(self, a: Dataset, b: Dataset, eps: float) -> tuple[float, float]:
        self.check_arity(a)
        self.check_arity(b)
        d = int(np.sum(a.users[:, 0] != b.users[:, 0]))
        hs = self.divergence_for_distance(d, eps)
        return hs, hs


def pac_em_mechanism(hypotheses, eps: float, universe_size: int | None = None) -> ExactMechanism:
    """Exponential mechanism over ``hypotheses`` with the user-clipped PAC score (sensitivity 1)."""
    hyps = [np.asarray(h, dtype=np.int64) for h in hypotheses]

    def fn(ds):
        return em_distribution(pac_scores(hyps, ds), eps)

    return ExactMechanism(fn, len(hyps), None, name=f"pac-em({eps:g})")
