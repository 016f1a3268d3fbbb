"""Closed-form arithmetic on (epsilon, delta) privacy parameters.

All logarithms are natural. Constants that the underlying bounds leave
implicit are explicit keyword arguments defaulting to 1.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .core import PrivacyParams


class DelStabParams(NamedTuple):
    eps_bar: float
    delta_bar: float
    kappa: int


def compose_triangle(first: PrivacyParams, second: PrivacyParams) -> PrivacyParams:
    """Chain ``A ~ B`` at ``first`` and ``B ~ C`` at ``second`` into ``A ~ C``.

    Returns ``(eps + eps', e^eps' delta + e^eps delta')`` where ``first = (eps', delta')``
    and ``second = (eps, delta)``.
    """
    eps1, delta1 = first
    eps2, delta2 = second
    if eps1 == 0 and delta1 == 0:
        return second
    if eps2 == 0 and delta2 == 0:
        return first
    delta = math.exp(eps2) * delta1 + math.exp(eps1) * delta2
    return PrivacyParams(eps1 + eps2, min(delta, math.nextafter(1.0, 0.0)))


def group_privacy(pp: PrivacyParams, k: int) -> PrivacyParams:
    """Item-level guarantee for datasets that differ in ``k`` items."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1:
        return pp
    eps, delta = pp
    if delta == 0:
        return PrivacyParams(k * eps, 0.0)
    factor = float(k) if eps == 0 else math.expm1(k * eps) / math.expm1(eps)
    return PrivacyParams(k * eps, min(factor * delta, math.nextafter(1.0, 0.0)))


def group_delta_factor(eps: float, k: int) -> float:
    """``(e^{k eps} - 1) / (e^eps - 1)``, the multiplier on delta under group privacy."""
    if eps == 0:
        return float(k)
    return math.expm1(k * eps) / math.expm1(eps)


def subsample_amplify(pp: PrivacyParams, eta: float) -> PrivacyParams:
    """Guarantee after running on a uniformly random ``eta`` fraction of the samples."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")
    if eta == 1:
        return pp
    eps, delta = pp
    return PrivacyParams(math.log1p(eta * math.expm1(eps)), eta * delta)


def tdlap_kappa(eps: float, delta: float) -> int:
    """Half-width ``1 + ceil(ln(1/delta) / eps)`` of the truncated discrete Laplace support."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 1 + math.ceil(math.log(1.0 / delta) / eps)


def delstab_params(pp: PrivacyParams) -> DelStabParams:
    """Internal ``(eps_bar, delta_bar, kappa)`` of the DelStab transformation."""
    eps, delta = pp
    if delta == 0:
        raise ValueError("DelStab needs delta > 0")
    if eps <= 0:
        raise ValueError("DelStab needs epsilon > 0")
    eps_bar = eps / 3.0
    delta_bar = delta / (math.exp(2 * eps_bar) + math.exp(eps_bar) + 2.0)
    return DelStabParams(eps_bar, delta_bar, tdlap_kappa(eps_bar, delta_bar))


def translate_item_to_user(pp: PrivacyParams, m: int, c_delta: float = 1.0) -> PrivacyParams:
    """Item-level ``(eps', delta')`` an item-level learner must meet for a user-level ``pp``.

    ``eps' = eps^2 / (ln(1/delta) sqrt(m ln(m/delta)))`` and
    ``delta' = c_delta * delta * eps / (m ln(1/delta))``. ``c_delta`` stands in for the
    unstated constant of the asymptotic statement.
    """
    eps, delta = pp
    if m < 1:
        raise ValueError("m must be a positive integer")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    inner = m * math.log(m / delta)
    if inner <= 0:
        raise ValueError("m * ln(m / delta) must be positive")
    log_inv_delta = math.log(1.0 / delta)
    eps_item = eps**2 / (log_inv_delta * math.sqrt(inner))
    delta_item = c_delta * delta * eps / (m * log_inv_delta)
    return PrivacyParams(eps_item, delta_item)


def user_complexity_estimate(
    n_item: float, pp: PrivacyParams, m: int, c_first: float = 1.0, c_second: float = 1.0
) -> float:
    """Unit-constant shape ``ln(1/delta)/eps + n_item/m`` of the user-count bound."""
    eps, delta = pp
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    return c_first * math.log(1.0 / delta) / eps + c_second * n_item / m


def same_eps_user_complexity_estimate(
    n_item_fn, pp: PrivacyParams, m: int, c_delta: float = 1.0
) -> float:
    """Bound shape when the item-level learner is run at the translated parameters.

    ``n_item_fn(eps_item, delta_item)`` returns the item-level sample complexity.
    """
    item = translate_item_to_user(pp, m, c_delta)
    return user_complexity_estimate(n_item_fn(item.epsilon, item.delta), pp, m)


def summary(pp: PrivacyParams, m: int | None = None, c_delta: float = 1.0) -> dict:
    """Every derived quantity for ``(eps, delta[, m])``, as a JSON-ready dict."""
    out: dict = {"epsilon": pp.epsilon, "delta": pp.delta}
    if pp.delta > 0 and pp.epsilon > 0:
        eps_bar, delta_bar, kappa = delstab_params(pp)
        out.update(
            eps_bar=eps_bar,
            delta_bar=delta_bar,
            kappa=kappa,
            min_users=4 * kappa,
            tdlap_support_size=2 * kappa + 1,
        )
    if m is not None:
        out["m"] = m
        if 0 < pp.delta < 1 and pp.epsilon > 0:
            item = translate_item_to_user(pp, m, c_delta)
            out.update(item_epsilon=item.epsilon, item_delta=item.delta, c_delta=c_delta)
            out["privacy_users_term"] = user_complexity_estimate(0.0, pp, m)
    return out
