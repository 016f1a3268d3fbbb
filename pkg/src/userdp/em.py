"""Exponential mechanism and user-level (clipped) scoring functions.

Lower scores are better: candidate ``H`` is selected with probability
proportional to ``exp(-eps * score_H / (2 * sensitivity))``.

Labeled universes encode the example ``(x, y)`` with ``x`` in ``[num_points]``
and ``y`` in ``{0, 1}`` as the item index ``2 * x + y``. A hypothesis over such a
universe is a length-``num_points`` 0/1 label vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, FiniteDistribution, as_generator, sample_index

# Default cap on the number of float64 entries of a fully materialised psi table.
PSI_MEMORY_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    sensitivity: float

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if self.sensitivity < 0:
            raise ValueError("sensitivity must be nonnegative")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.scores.size


def em_log_weights(sv: ScoreVector, eps: float) -> np.ndarray:
    if len(sv) == 0:
        raise ValueError("empty candidate set")
    if not sv.sensitivity > 0:
        raise ValueError("selection needs a positive sensitivity")
    return -eps * sv.scores / (2.0 * sv.sensitivity)


def em_distribution(sv: ScoreVector, eps: float) -> FiniteDistribution:
    """Exact selection probabilities of the exponential mechanism."""
    logits = em_log_weights(sv, eps)
    w = np.exp(logits - logits.max())
    # fsum is correctly rounded, so the normaliser does not depend on candidate order.
    return FiniteDistribution(w / math.fsum(w))


def em_select(sv: ScoreVector, eps: float, rng) -> int:
    """Draw one candidate index from :func:`em_distribution`."""
    if len(sv) == 1:
        em_log_weights(sv, eps)
        return 0
    return sample_index(np.cumsum(em_distribution(sv, eps).masses), as_generator(rng))


# -- PAC scoring -------------------------------------------------------------


def encode_example(x: int, y: int) -> int:
    return 2 * int(x) + int(y)


def decode_example(z: int) -> tuple[int, int]:
    return int(z) // 2, int(z) % 2


def label_consistency(hypothesis: Sequence[int], universe_size: int | None = None) -> np.ndarray:
    """Boolean vector over labeled-universe items: does ``hypothesis`` agree with item ``z``?"""
    labels = np.asarray(hypothesis, dtype=np.int64)
    size = 2 * labels.size if universe_size is None else universe_size
    z = np.arange(size)
    return labels[z // 2] == z % 2


def pac_score(
    hypothesis,
    ds: Dataset,
    consistent: Callable[[object, int], bool] | None = None,
) -> int:
    """Number of users whose examples are not all consistent with ``hypothesis``.

    Each user contributes at most one, so the score has user-level sensitivity 1.
    ``consistent(hypothesis, item)`` defaults to label agreement on a labeled universe.
    """
    if consistent is None:
        table = label_consistency(hypothesis, ds.universe_size)
    else:
        table = np.array([bool(consistent(hypothesis, z)) for z in range(ds.universe_size)])
    if ds.n == 0:
        return 0
    bad_user = ~np.all(table[ds.users], axis=1)
    return int(bad_user.sum())


def pac_scores(hypotheses, ds: Dataset, consistent=None) -> ScoreVector:
    return ScoreVector([pac_score(h, ds, consistent) for h in hypotheses], sensitivity=1.0)


# -- pairwise comparison scoring ---------------------------------------------


class ComparisonFamily:
    """Comparison functions ``psi[H, H', z]`` in ``[-1, 1]`` over a candidate set.

    ``row_fn(h)`` returns the ``(candidate_count, universe_size)`` slice ``psi[h]``.
    Rows are memoised; when the full table fits in ``memory_budget`` float entries
    it is built once up front.
    """

    def __init__(
        self,
        candidate_count: int,
        universe_size: int,
        row_fn: Callable[[int], np.ndarray],
        memory_budget: int = PSI_MEMORY_BUDGET,
        check_rows: int = 8,
    ):
        if candidate_count < 1:
            raise ValueError("need at least one candidate")
        self.candidate_count = candidate_count
        self.universe_size = universe_size
        self._row_fn = row_fn
        self._rows: dict[int, np.ndarray] = {}
        self._table = None
        if candidate_count**2 * universe_size <= memory_budget:
            self._table = np.stack([self._compute_row(h) for h in range(candidate_count)])
        else:
            step = max(1, candidate_count // check_rows)
            for h in range(0, candidate_count, step):
                self.row(h)

    def _compute_row(self, h: int) -> np.ndarray:
        row = np.asarray(self._row_fn(h), dtype=np.float64)
        if row.shape != (self.candidate_count, self.universe_size):
            raise ValueError(f"psi row has shape {row.shape}")
        if np.any(np.abs(row) > 1 + 1e-12):
            raise ValueError(f"comparison values must lie in [-1, 1] (row {h})")
        return row

    def row(self, h: int) -> np.ndarray:
        if self._table is not None:
            return self._table[h]
        if h not in self._rows:
            self._rows[h] = self._compute_row(h)
        return self._rows[h]

    def psi(self, h: int, h2: int, z: int) -> float:
        return float(self.row(h)[h2, z])

    @classmethod
    def from_callable(cls, candidate_count: int, universe_size: int, psi, **kwargs) -> "ComparisonFamily":
        """Wrap a scalar ``psi(h, h2, z)``."""

        def row_fn(h):
            return np.array(
                [[psi(h, h2, z) for z in range(universe_size)] for h2 in range(candidate_count)],
                dtype=np.float64,
            )

        return cls(candidate_count, universe_size, row_fn, **kwargs)


def _unique_users(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    counts = ds.item_counts()
    if counts.shape[0] == 0:
        return counts, np.zeros(0)
    uniq, mult = np.unique(counts, axis=0, return_counts=True)
    return uniq.astype(np.float64), mult.astype(np.float64)


def pairwise_clipped_matrix(cf: ComparisonFamily, ds: Dataset, tau: float) -> np.ndarray:
    """``M[H, H'] = sum_i clip(sum_{x in x_i} psi[H, H', x], -tau, tau)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if ds.universe_size != cf.universe_size:
        raise ValueError("dataset universe does not match the comparison family")
    uniq, mult = _unique_users(ds)
    H = cf.candidate_count
    out = np.zeros((H, H))
    if uniq.shape[0] == 0:
        return out
    for h in range(H):
        per_user = uniq @ cf.row(h).T
        out[h] = mult @ np.clip(per_user, -tau, tau)
    return out


def pairwise_clipped_scores(cf: ComparisonFamily, ds: Dataset, tau: float) -> ScoreVector:
    """Clipped pairwise scores ``max_{H' != H} M[H, H']`` with sensitivity ``2 tau``."""
    if cf.candidate_count < 2:
        raise ValueError("pairwise scoring needs at least two candidates")
    mat = pairwise_clipped_matrix(cf, ds, tau)
    np.fill_diagonal(mat, -np.inf)
    return ScoreVector(mat.max(axis=1), sensitivity=2.0 * tau)


def scheffe_family(candidates: Sequence[FiniteDistribution], **kwargs) -> ComparisonFamily:
    """``psi[P, P', z] = P(W) - 1[z in W]`` with ``W = {z : P(z) > P'(z)}``."""
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    k = len(candidates[0])
    if any(len(c) != k for c in candidates):
        raise ValueError("candidates must share a domain")
    masses = np.stack([c.masses for c in candidates])

    def row_fn(h):
        wins = masses[h][None, :] > masses
        p_w = (masses[h][None, :] * wins).sum(axis=1)
        return p_w[:, None] - wins

    return ComparisonFamily(len(candidates), k, row_fn, **kwargs)


def agnostic_family(concepts, num_points: int | None = None, **kwargs) -> ComparisonFamily:
    """``psi[c, c', (x, y)] = 1[c(x) != y] - 1[c'(x) != y]`` over a labeled universe.

    The expectation under a distribution ``D`` is ``Err_D(c) - Err_D(c')``, so a low
    pairwise score means ``c`` is no worse than ``c'``, matching the low-is-better
    convention of the exponential mechanism.
    """
    labels = np.asarray(concepts, dtype=np.int64)
    if labels.ndim != 2:
        raise ValueError("concepts must be a 2-d array of labels")
    if num_points is not None and labels.shape[1] != num_points:
        raise ValueError("concept length does not match num_points")
    universe = 2 * labels.shape[1]
    correct = np.stack([label_consistency(c, universe) for c in labels]).astype(np.float64)

    def row_fn(h):
        return correct - correct[h][None, :]

    return ComparisonFamily(labels.shape[0], universe, row_fn, **kwargs)


def default_tau(alpha: float, m: int, c_tau: float = 1.0) -> float:
    """Clipping threshold ``c_tau * (alpha m + sqrt(m ln(1/alpha)))``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if m < 1:
        raise ValueError("m must be positive")
    return c_tau * (alpha * m + math.sqrt(m * math.log(1.0 / alpha)))
