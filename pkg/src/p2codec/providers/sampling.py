"""Turn raw model logits into a 256-symbol distribution.

Given a logit vector over a provider vocabulary, gather the entries at the
digital-token IDs and softmax-normalize them. Mass at every other vocabulary
entry is dropped by construction, which is what turns a general next-token
model into a 256-symbol model.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptProviderOutputError
from ..tokens import DigitalTokenMap

__all__ = ["sample_distribution"]


def sample_distribution(
    logits: np.ndarray, token_map: DigitalTokenMap | None = None
) -> np.ndarray:
    """Gather logits at the digital-token IDs and softmax them.

    Accepts either a full-vocabulary vector (token_map required) or a
    pre-gathered vector of exactly 256 entries. The max is subtracted before
    exponentiation for numerical stability, which also makes the result
    invariant under a constant logit shift.
    """
    arr = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise CorruptProviderOutputError("non-finite logit in provider output")
    if arr.size != 256:
        if token_map is None:
            raise CorruptProviderOutputError(
                f"got {arr.size} logits without a token map to gather with"
            )
        ids = token_map.forward_array()
        if arr.size <= int(ids.max()):
            raise CorruptProviderOutputError(
                f"logit vector of size {arr.size} does not cover token ID {int(ids.max())}"
            )
        arr = arr[ids]
    shifted = arr - arr.max()
    weights = np.exp(shifted)
    return weights / weights.sum()
