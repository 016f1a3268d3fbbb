"""User-level differential privacy: DelStab, clipped exponential mechanisms, exact audits."""

from .core import (
    BudgetExceededError,
    Dataset,
    DomainMismatchError,
    FiniteDistribution,
    PrivacyParams,
    approx_indist,
    chi2_divergence,
    clip,
    hockey_stick,
    kl_divergence,
    tv_distance,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "Dataset",
    "DomainMismatchError",
    "FiniteDistribution",
    "PrivacyParams",
    "approx_indist",
    "chi2_divergence",
    "clip",
    "hockey_stick",
    "kl_divergence",
    "tv_distance",
]
