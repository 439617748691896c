"""Protocol-specific sifting and sampled QBER estimation.

Sifting turns a :class:`~qkdnet.channel.RawEventLog` into matched
sender/receiver bit strings:

* ``bb84`` / ``bbm92`` keep detections whose measurement basis matches
  the preparation basis (expected keep ratio 1/2 of detections);
* ``sarg04`` keeps detections whose outcome is orthogonal to one of the
  two announced candidate states. The key bit is the preparation basis;
  the receiver infers it from which candidate was excluded. Ideal
  single-photon keep ratio is 1/4.
* ``dps`` keeps every click after the first slot; the sender bit is the
  phase difference of adjacent pulses. (The hardware model emits at most
  one click per slot, so the conservative discard-on-double-click rule
  never triggers here.)

All functions are pure and parallel-safe per block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import RawEventLog
from .errors import InvalidArgumentError


@dataclass
class SiftedPair:
    """Matched bit strings for one sifted block."""

    link_id: str
    block_seq: int
    alice_bits: np.ndarray   # uint8
    bob_bits: np.ndarray     # uint8
    source_pulse_count: int
    elapsed_s: float

    def __post_init__(self):
        if len(self.alice_bits) != len(self.bob_bits):
            raise InvalidArgumentError("sifted strings must have equal length")

    def __len__(self) -> int:
        return len(self.alice_bits)


@dataclass(frozen=True)
class QberEstimate:
    """Sampled error rate from publicly disclosed positions."""

    sample_size: int
    error_count: int
    rate: float
    timestamp_s: float


def sift(protocol: str, log: RawEventLog, link_id: str = "",
         block_seq: int = 0) -> SiftedPair:
    """Sift a raw event log into matched bit strings."""
    if protocol != log.protocol:
        raise InvalidArgumentError(
            f"log carries protocol {log.protocol!r}, requested {protocol!r}")

    slots = log.det_slots
    if slots.size == 0:
        empty = np.zeros(0, dtype=np.uint8)
        return SiftedPair(link_id, block_seq, empty, empty.copy(),
                          log.n_pulses, log.elapsed_s)

    if protocol in ("bb84", "bbm92"):
        keep = log.det_bases == log.alice_bases[slots]
        alice = log.alice_bits[slots][keep]
        bob = log.det_bits[keep]
    elif protocol == "sarg04":
        a_basis = log.alice_bases[slots]
        a_bit = log.alice_bits[slots]
        # keep when the outcome excludes one announced candidate; the
        # inferred key bit is the candidate basis that survives
        keep = log.det_bits != a_bit
        alice = a_basis[keep]
        excluded_sent = (log.det_bases == a_basis)[keep]
        bob = np.where(excluded_sent, a_basis[keep] ^ 1, a_basis[keep]).astype(np.uint8)
    elif protocol == "dps":
        keep = slots >= 1
        kslots = slots[keep]
        alice = (log.alice_bits[kslots] ^ log.alice_bits[kslots - 1]).astype(np.uint8)
        bob = log.det_bits[keep]
    else:
        raise InvalidArgumentError(f"unknown protocol {protocol!r}")

    return SiftedPair(link_id, block_seq, np.ascontiguousarray(alice, dtype=np.uint8),
                      np.ascontiguousarray(bob, dtype=np.uint8),
                      log.n_pulses, log.elapsed_s)


def estimate_qber(pair: SiftedPair, disclose_fraction: float,
                  seed: int, timestamp_s: float = 0.0) -> tuple[QberEstimate, SiftedPair]:
    """Disclose a seeded uniform sample of positions, compare, and remove.

    Returns the estimate and the reduced pair with disclosed positions
    removed from both strings.
    """
    n = len(pair)
    if n == 0:
        raise InvalidArgumentError("cannot estimate QBER of an empty pair")
    if not 0.0 < disclose_fraction < 1.0:
        raise InvalidArgumentError("disclose_fraction must be in (0,1)")

    k = int(np.ceil(disclose_fraction * n))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    sample = order[:k]
    errors = int(np.count_nonzero(pair.alice_bits[sample] != pair.bob_bits[sample]))
    mask = np.ones(n, dtype=bool)
    mask[sample] = False
    reduced = SiftedPair(pair.link_id, pair.block_seq,
                         pair.alice_bits[mask], pair.bob_bits[mask],
                         pair.source_pulse_count, pair.elapsed_s)
    return QberEstimate(k, errors, errors / k, timestamp_s), reduced
