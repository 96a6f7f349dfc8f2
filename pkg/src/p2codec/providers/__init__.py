from .base import (
    ProbabilityProvider,
    ProviderSession,
    factorization_check,
    provider_fingerprint,
    validate_pmf,
)
from .builtin import UNIFORM_PMF, AdaptiveContextModel, counting_oracle_pmf
from .sampling import sample_distribution
from .remote import RemoteProvider

__all__ = [
    "ProbabilityProvider",
    "ProviderSession",
    "factorization_check",
    "provider_fingerprint",
    "validate_pmf",
    "AdaptiveContextModel",
    "counting_oracle_pmf",
    "UNIFORM_PMF",
    "sample_distribution",
    "RemoteProvider",
]
