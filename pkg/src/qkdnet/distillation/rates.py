"""Error-correction coding-rate table and binary entropy."""

from __future__ import annotations

import math

from ..errors import BlockAbortError, InvalidArgumentError

# (QBER upper bound, coding rate); leakage fraction is 1 - rate
EC_RATE_TABLE: tuple[tuple[float, float], ...] = (
    (0.035, 0.75),
    (0.055, 0.65),
    (0.075, 0.55),
)


def select_ec_rate(qber: float) -> float:
    """Coding rate for a QBER per the stepped rate table.

    Raises :class:`BlockAbortError` above the last threshold: key
    generation for the block must stop.
    """
    if not 0.0 <= qber <= 0.5:
        raise InvalidArgumentError(f"qber must be in [0, 0.5], got {qber}")
    for bound, rate in EC_RATE_TABLE:
        if qber < bound:
            return rate
    raise BlockAbortError(qber)


def binary_entropy(e: float) -> float:
    """H2(e) = -e log2 e - (1-e) log2 (1-e), with 0 log 0 = 0."""
    if not 0.0 <= e <= 1.0:
        raise InvalidArgumentError(f"entropy argument must be in [0,1], got {e}")
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)
