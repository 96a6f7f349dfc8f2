"""Deterministic order-k adaptive frequency models.

These are the desk-scale providers: an order-k model keeps integer counts of
which symbol followed each length-k context and predicts with add-alpha
smoothing. All state is exact integers; the single float division at the end
is IEEE-exact rounding of integer operands, so identical histories produce
bit-identical distributions on every platform.

The smoothing constant is held as an exact fraction. With context counts c
and total t over alphabet 256, the prediction is

    p[z] = (c[z] * den + num) / (t * den + 256 * num)

where alpha = num / den.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import ConfigError
from ..serialization import OrderingMode
from ..tokens import DigitalTokenMap, PromptConfig, identity_token_map, word_tokenizer
from .base import ProbabilityProvider, ProviderSession, provider_fingerprint

__all__ = ["AdaptiveContextModel", "counting_oracle_pmf", "UNIFORM_PMF"]

MAX_ORDER = 2

# Shared between all sessions for unseen contexts; treat as read-only.
UNIFORM_PMF = np.full(256, 1.0 / 256.0)
UNIFORM_PMF.setflags(write=False)


class _AdaptiveSession(ProviderSession):
    def __init__(
        self,
        order: int,
        alpha: Fraction,
        prompt_token_count: int,
        mode: OrderingMode,
        channel: int | None,
    ) -> None:
        super().__init__(prompt_token_count, mode, channel, deterministic=True)
        self.order = order
        self.alpha_num = alpha.numerator
        self.alpha_den = alpha.denominator
        self.counts: dict[tuple[int, ...], np.ndarray] = {}
        self.totals: dict[tuple[int, ...], int] = {}

    def _context_key(self) -> tuple[int, ...]:
        h = self.history
        k = self.order
        if k == 0 or not h:
            return ()
        return tuple(h[-k:])

    def next_pmf(self) -> np.ndarray:
        key = self._context_key()
        counts = self.counts.get(key)
        if counts is None:
            # (0*den + num) / (0 + 256*num) is exactly 1/256 for any alpha.
            return UNIFORM_PMF
        num, den = self.alpha_num, self.alpha_den
        numer = counts * den + num
        return numer / float(self.totals[key] * den + 256 * num)

    def observe(self, symbol: int) -> None:
        key = self._context_key()
        counts = self.counts.get(key)
        if counts is None:
            counts = np.zeros(256, dtype=np.int64)
            self.counts[key] = counts
            self.totals[key] = 0
        counts[symbol] += 1
        self.totals[key] += 1
        self.history.append(symbol)

    def fork(self) -> "_AdaptiveSession":
        clone = _AdaptiveSession(
            self.order,
            Fraction(self.alpha_num, self.alpha_den),
            self.prompt_token_count,
            self.mode,
            self.channel,
        )
        clone.counts = {k: v.copy() for k, v in self.counts.items()}
        clone.totals = dict(self.totals)
        clone.history = list(self.history)
        return clone


class AdaptiveContextModel(ProbabilityProvider):
    """Provider of fresh order-k adaptive sessions."""

    def __init__(self, order: int, alpha: float | Fraction | str = 1) -> None:
        if not 0 <= order <= MAX_ORDER:
            raise ConfigError(f"order must be 0..{MAX_ORDER}, got {order}")
        self.order = order
        # Floats route through their decimal repr: Fraction(0.1) would carry a
        # 2**55 denominator and overflow the int64 count arithmetic.
        self.alpha = Fraction(str(alpha)) if isinstance(alpha, float) else Fraction(alpha)
        if self.alpha <= 0:
            raise ConfigError(f"smoothing must be positive, got {alpha}")
        self.name = f"builtin:order{order}:alpha={self.alpha}"
        self.deterministic = True
        self.context_window = None
        self._token_map = identity_token_map()

    @property
    def fingerprint(self) -> int:
        return provider_fingerprint(self.name)

    @property
    def token_map(self) -> DigitalTokenMap:
        return self._token_map

    def begin(
        self,
        prompt: PromptConfig,
        mode: OrderingMode,
        channel: int | None = None,
    ) -> _AdaptiveSession:
        text = prompt.effective_text
        prompt_tokens = len(word_tokenizer(text)) if text else 0
        return _AdaptiveSession(self.order, self.alpha, prompt_tokens, mode, channel)


def counting_oracle_pmf(
    history: list[int], order: int, alpha: Fraction | float | str = 1
) -> np.ndarray:
    """Brute-force reference: recount the whole history on every call.

    For each position j, the context is the (up to `order`) symbols
    immediately before j. The prediction for the current context recounts
    every matching position from scratch, independently of the incremental
    bookkeeping in _AdaptiveSession.
    """
    alpha = Fraction(str(alpha)) if isinstance(alpha, float) else Fraction(alpha)
    n = len(history)
    query = tuple(history[max(0, n - order) : n]) if order else ()
    counts = np.zeros(256, dtype=np.int64)
    for j in range(n):
        ctx = tuple(history[max(0, j - order) : j]) if order else ()
        if ctx == query:
            counts[history[j]] += 1
    num, den = alpha.numerator, alpha.denominator
    total = int(counts.sum())
    return (counts * den + num) / float(total * den + 256 * num)
