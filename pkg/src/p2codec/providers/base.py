"""Probability-provider contract.

A provider is any deterministic source of next-symbol distributions over the
256-value alphabet, conditioned on a task prompt plus the symbol history.
Sessions are single-owner state machines: one coding stream drives one
session, alternating next_pmf() and observe(). Distinct sessions may run in
parallel; a single session must never be shared.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np

from ..errors import UnsupportedCheckError
from ..serialization import OrderingMode
from ..tokens import DigitalTokenMap, PromptConfig

__all__ = [
    "ProbabilityProvider",
    "ProviderSession",
    "validate_pmf",
    "provider_fingerprint",
    "factorization_check",
]

PMF_SUM_TOLERANCE = 1e-9


def validate_pmf(pmf: np.ndarray) -> None:
    """Assert the next-symbol distribution invariants (shape, mass, sign)."""
    assert pmf.shape == (256,), f"pmf shape {pmf.shape}"
    assert np.all(pmf >= 0.0), "negative probability"
    total = float(pmf.sum())
    assert abs(total - 1.0) <= PMF_SUM_TOLERANCE, f"pmf sums to {total!r}"


def provider_fingerprint(identity: str) -> int:
    """Stable 64-bit fingerprint of a provider identity string."""
    digest = hashlib.blake2b(identity.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class ProviderSession:
    """One coding stream's view of a provider.

    Subclasses implement next_pmf/observe/fork. The base class tracks the
    symbol history so generic forking and accounting work for any provider.
    """

    def __init__(
        self,
        prompt_token_count: int,
        mode: OrderingMode,
        channel: int | None,
        deterministic: bool,
    ) -> None:
        self.prompt_token_count = prompt_token_count
        self.mode = mode
        self.channel = channel
        self.deterministic = deterministic
        self.history: list[int] = []

    def next_pmf(self) -> np.ndarray:
        raise NotImplementedError

    def observe(self, symbol: int) -> None:
        raise NotImplementedError

    def fork(self) -> "ProviderSession":
        raise NotImplementedError

    def close(self) -> None:
        pass


class ProbabilityProvider:
    """Factory for sessions; also carries identity and window metadata."""

    name: str = "provider"
    deterministic: bool = True
    #: None means unbounded context.
    context_window: int | None = None

    @property
    def fingerprint(self) -> int:
        raise NotImplementedError

    @property
    def token_map(self) -> DigitalTokenMap:
        raise NotImplementedError

    def begin(
        self,
        prompt: PromptConfig,
        mode: OrderingMode,
        channel: int | None = None,
    ) -> ProviderSession:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _replay_fork(provider: ProbabilityProvider, session: ProviderSession) -> ProviderSession:
    """Fork by replaying history into a fresh session (valid because the
    provider is deterministic)."""
    prompt = PromptConfig(text="", enabled=False)
    clone = provider.begin(prompt, session.mode, session.channel)
    for s in session.history:
        clone.observe(s)
    return clone


def factorization_check(
    provider: ProbabilityProvider,
    pixel_context: Iterable[int],
    candidate_pixel: tuple[int, int, int],
    prompt: PromptConfig | None = None,
    mode: OrderingMode = OrderingMode.CHANNEL_JOINT,
) -> tuple[float, float]:
    """Chain-rule consistency probe for channel-joint prediction.

    Evaluates p(r|ctx) * p(g|ctx,r) * p(b|ctx,r,g) twice: once on a session
    and once on a fork of it. For a deterministic provider both products must
    be bit-identical; callers assert equality. Returns (joint, product).
    """
    if not provider.deterministic:
        raise UnsupportedCheckError(
            f"{provider.name}: factorization check needs a deterministic provider"
        )
    if prompt is None:
        prompt = PromptConfig.off()
    base = provider.begin(prompt, mode)
    for s in pixel_context:
        base.observe(int(s))
    forks = [base.fork(), base.fork()]
    products = []
    for sess in forks:
        prob = 1.0
        for s in candidate_pixel:
            pmf = sess.next_pmf()
            prob *= float(pmf[int(s)])
            sess.observe(int(s))
        products.append(prob)
        sess.close()
    base.close()
    return products[0], products[1]
