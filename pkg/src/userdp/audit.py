"""Brute-force and sampled verification of (eps, delta)-DP on finite universes."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .core import (
    BudgetExceededError,
    Dataset,
    FiniteDistribution,
    PrivacyParams,
    as_generator,
    max_log_ratio,
)
from .delstab import DEFAULT_BUDGET
from .mechanisms import ExactMechanism

# Floating-point slack added to delta in every verdict.
AUDIT_TOL = 1e-9
# Largest output domain for which sampled audits also compute pointwise log-ratios.
DENSE_OUTPUT_LIMIT = 1 << 16


@dataclass
class AuditReport:
    mode: str
    level: str
    epsilon: float
    delta: float
    pairs_checked: int
    max_divergence: float
    max_log_ratio: float | None
    worst_pair: dict | None
    verdict: str
    tolerance: float = AUDIT_TOL
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["max_log_ratio"] is not None and math.isinf(out["max_log_ratio"]):
            out["max_log_ratio"] = "inf"
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _verdict(max_div: float, delta: float, tol: float) -> str:
    return "pass" if max_div <= delta + tol else "fail"


def _row_hockey_stick(p: np.ndarray, q: np.ndarray, eps: float) -> np.ndarray:
    diff = p - math.exp(eps) * q
    return np.where(diff > 0, diff, 0.0).sum(axis=1)


def _row_log_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    zp, zq = p == 0, q == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.abs(np.log(p) - np.log(q))
    lr = np.where(zp & zq, 0.0, lr)
    lr = np.where(zp ^ zq, np.inf, lr)
    return lr.max(axis=1)


def _decode(idx: int, universe_size: int, n: int, m: int) -> Dataset:
    digits = np.zeros(n * m, dtype=np.int64)
    for j in range(n * m - 1, -1, -1):
        digits[j] = idx % universe_size
        idx //= universe_size
    return Dataset(universe_size, digits.reshape(n, m))


def _pair_dict(a: Dataset, b: Dataset) -> dict:
    return {"dataset": a.users.tolist(), "neighbor": b.users.tolist(), "universe_size": a.universe_size}


def _exhaustive(mech, universe_size, n, m, pp, budget, level) -> AuditReport:
    U = universe_size
    n_data = U ** (n * m)
    if level == "user":
        per_dataset = n * (U**m - 1)
    else:
        per_dataset = n * m * (U - 1)
    pairs = n_data * per_dataset
    if pairs > budget:
        raise BudgetExceededError(f"exhaustive audit needs {pairs} pairs, budget is {budget}")

    outs = np.stack([mech(_decode(i, U, n, m)).masses for i in range(n_data)])
    idx = np.arange(n_data, dtype=np.int64)
    best = (-1.0, None)
    worst_lr = 0.0
    if level == "user":
        blocks = [(U ** (m * (n - 1 - i)), U**m) for i in range(n)]
    else:
        blocks = [(U ** (n * m - 1 - j), U) for j in range(n * m)]
    checked = 0
    for weight, radix in blocks:
        current = (idx // weight) % radix
        for value in range(radix):
            mask = current != value
            src = idx[mask]
            nb = src + (value - current[mask]) * weight
            p, q = outs[src], outs[nb]
            hs = np.maximum(_row_hockey_stick(p, q, pp.epsilon), _row_hockey_stick(q, p, pp.epsilon))
            checked += src.size
            k = int(np.argmax(hs))
            if hs[k] > best[0]:
                best = (float(hs[k]), (int(src[k]), int(nb[k])))
            worst_lr = max(worst_lr, float(_row_log_ratio(p, q).max()))
    a, b = best[1]
    return AuditReport(
        mode="exhaustive",
        level=level,
        epsilon=pp.epsilon,
        delta=pp.delta,
        pairs_checked=checked,
        max_divergence=best[0],
        max_log_ratio=worst_lr,
        worst_pair=_pair_dict(_decode(a, U, n, m), _decode(b, U, n, m)),
        verdict=_verdict(best[0], pp.delta, AUDIT_TOL),
    )


def _sampled(mech, universe_size, n, m, pp, budget, rng_seed, level, replacement) -> AuditReport:
    if replacement is None:
        replacement = FiniteDistribution.uniform(universe_size)
    if len(replacement) != universe_size:
        raise ValueError("replacement distribution must live on the universe")
    seed = int(rng_seed)
    dense = mech.output_size <= DENSE_OUTPUT_LIMIT
    best, worst, worst_lr = -1.0, None, 0.0 if dense else None
    for t in range(budget):
        rng = np.random.default_rng([seed, t])
        users = rng.integers(universe_size, size=(n, m))
        ds = Dataset(universe_size, users)
        i = int(rng.integers(n))
        new = users.copy()
        if level == "user":
            new[i] = rng.choice(universe_size, size=m, p=replacement.masses)
        else:
            j = int(rng.integers(m))
            new[i, j] = rng.choice(universe_size, p=replacement.masses)
        nb = Dataset(universe_size, new)
        hs = max(mech.divergences(ds, nb, pp.epsilon))
        if hs > best:
            best, worst = hs, (ds, nb)
        if dense:
            worst_lr = max(worst_lr, max_log_ratio(mech(ds), mech(nb)))
    return AuditReport(
        mode="sampled",
        level=level,
        epsilon=pp.epsilon,
        delta=pp.delta,
        pairs_checked=budget,
        max_divergence=max(best, 0.0),
        max_log_ratio=worst_lr,
        worst_pair=_pair_dict(*worst) if worst else None,
        verdict=_verdict(max(best, 0.0), pp.delta, AUDIT_TOL),
        seed=seed,
    )


def verify_user_dp(
    mech: ExactMechanism,
    universe_size: int,
    n: int,
    m: int,
    pp: PrivacyParams,
    mode: str = "exhaustive",
    budget: int = DEFAULT_BUDGET,
    rng_seed: int = 0,
    replacement: FiniteDistribution | None = None,
) -> AuditReport:
    """Check ``mech`` against every (or ``budget`` random) user-level neighbour pairs.

    Exhaustive mode enumerates all ``universe_size ** (n m)`` datasets and every
    replacement of one user's full record. Sampled mode draws datasets uniformly and
    replacement records i.i.d. from ``replacement`` (uniform by default).
    """
    return _audit(mech, universe_size, n, m, pp, mode, budget, rng_seed, "user", replacement)


def verify_item_dp(
    mech: ExactMechanism,
    universe_size: int,
    n: int,
    m: int,
    pp: PrivacyParams,
    mode: str = "exhaustive",
    budget: int = DEFAULT_BUDGET,
    rng_seed: int = 0,
    replacement: FiniteDistribution | None = None,
) -> AuditReport:
    """As :func:`verify_user_dp`, but neighbours differ in a single item."""
    return _audit(mech, universe_size, n, m, pp, mode, budget, rng_seed, "item", replacement)


def _audit(mech, universe_size, n, m, pp, mode, budget, rng_seed, level, replacement):
    if mode == "exhaustive":
        return _exhaustive(mech, universe_size, n, m, pp, budget, level)
    if mode == "sampled":
        return _sampled(mech, universe_size, n, m, pp, budget, rng_seed, level, replacement)
    raise ValueError(f"unknown audit mode {mode!r}")


@dataclass
class SPGEstimate:
    """Fraction of dataset pairs whose outputs were indistinguishable, with a 95% exact interval."""

    fraction: float
    successes: int
    trials: int
    lower: float
    upper: float
    epsilon: float
    delta: float
    seed: int = field(default=0)

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_spg(
    mech: ExactMechanism,
    d: FiniteDistribution,
    n_samples: int,
    pp_prime: PrivacyParams,
    trials: int,
    rng_seed: int = 0,
) -> SPGEstimate:
    """Monte Carlo estimate of ``Pr_{x, x' ~ d^n}[mech(x) ~ mech(x')]`` at ``pp_prime``.

    Each sample is a single-item user, so ``mech`` sees ``n_samples`` users with ``m = 1``.
    """
    rng = as_generator(rng_seed)
    hits = 0
    for _ in range(trials):
        x = Dataset.sample(d, n_samples, 1, rng)
        y = Dataset.sample(d, n_samples, 1, rng)
        ab, ba = mech.divergences(x, y, pp_prime.epsilon)
        hits += ab <= pp_prime.delta and ba <= pp_prime.delta
    if trials:
        ci = binomtest(hits, trials).proportion_ci(confidence_level=0.95, method="exact")
        lo, hi = float(ci.low), float(ci.high)
    else:
        lo, hi = 0.0, 1.0
    return SPGEstimate(
        fraction=hits / trials if trials else float("nan"),
        successes=hits,
        trials=trials,
        lower=lo,
        upper=hi,
        epsilon=pp_prime.epsilon,
        delta=pp_prime.delta,
        seed=int(rng_seed) if not isinstance(rng_seed, np.random.Generator) else 0,
    )
