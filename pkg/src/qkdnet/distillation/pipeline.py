"""End-to-end distillation: sifted pairs in, secret key blocks out.

Stage order per accumulated block: sampled QBER estimation (disclosed
bits removed), seeded random permutation, error correction (Cascade or
the coding-rate leakage table), protocol-appropriate secure-fraction
bound, Toeplitz privacy amplification.

Secret key blocks serialize to the "QKB1" binary layout: header
(magic, 16-byte block id, 16-byte link id, bit length, epoch, QBER in
ppm, status byte), then the raw key bytes; multi-byte integers are
little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import (
    BlockAbortError,
    BlockDeferredError,
    InvalidArgumentError,
)
from ..protocols import SiftedPair, estimate_qber
from .bounds import DecoyStats, decoy_secure_fraction, dps_secure_fraction
from .cascade import CascadeConfig, cascade_reconcile
from .ntt import NTT_PRIME, assert_field_parameters
from .rates import select_ec_rate
from .toeplitz import toeplitz_hash

STATUS_FRESH = 0
STATUS_RESERVED = 1
STATUS_CONSUMED = 2
_STATUS_NAMES = {STATUS_FRESH: "fresh", STATUS_RESERVED: "reserved",
                 STATUS_CONSUMED: "consumed"}

_HEADER = struct.Struct("<4s16s16sQIIB")
MAGIC = b"QKB1"


@dataclass(frozen=True)
class DistillationConfig:
    sifted_block_bits: int = 1 << 20
    ntt_prime: int = NTT_PRIME
    ec_mode: str = "cascade"                 # or "rate_table"
    cascade_passes: int = 4
    pa_security_margin_bits: int = 100
    min_pa_block_bits: int = 300_000
    disclose_fraction: float = 0.10

    def __post_init__(self):
        assert_field_parameters()
        if self.ntt_prime != NTT_PRIME:
            raise InvalidArgumentError(f"field prime must be {NTT_PRIME}")
        if self.sifted_block_bits > NTT_PRIME - 1:
            raise InvalidArgumentError("sifted block exceeds field size")
        if self.ec_mode not in ("cascade", "rate_table"):
            raise InvalidArgumentError(f"unknown ec_mode {self.ec_mode!r}")
        if not 0.0 < self.disclose_fraction < 1.0:
            raise InvalidArgumentError("disclose_fraction must be in (0,1)")


@dataclass
class BlockProvenance:
    qber: float
    leakage_bits: int
    secure_fraction: float


@dataclass
class SecretKeyBlock:
    id: str
    bits: bytearray
    bit_length: int
    link_id: str
    created_s: float
    status: int = STATUS_FRESH
    epoch: int = 0
    provenance: BlockProvenance | None = None

    @property
    def status_name(self) -> str:
        return _STATUS_NAMES[self.status]

    def reserve(self) -> None:
        if self.status != STATUS_FRESH:
            raise InvalidArgumentError(f"cannot reserve a {self.status_name} block")
        self.status = STATUS_RESERVED

    def consume(self) -> None:
        if self.status != STATUS_RESERVED:
            raise InvalidArgumentError(f"cannot consume a {self.status_name} block")
        self.status = STATUS_CONSUMED
        for i in range(len(self.bits)):
            self.bits[i] = 0

    def to_bytes(self) -> bytes:
        qber = self.provenance.qber if self.provenance else 0.0
        header = _HEADER.pack(
            MAGIC,
            self.id.encode()[:16].ljust(16, b"\0"),
            self.link_id.encode()[:16].ljust(16, b"\0"),
            self.bit_length,
            self.epoch,
            int(round(qber * 1_000_000)),
            self.status,
        )
        return header + bytes(self.bits)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "SecretKeyBlock":
        magic, bid, lid, bit_length, epoch, qber_ppm, status = _HEADER.unpack_from(payload)
        if magic != MAGIC:
            raise InvalidArgumentError("bad key-block magic")
        body = bytearray(payload[_HEADER.size:])
        if len(body) != (bit_length + 7) // 8:
            raise InvalidArgumentError("key-block length mismatch")
        return cls(
            id=bid.rstrip(b"\0").decode(),
            bits=body,
            bit_length=bit_length,
            link_id=lid.rstrip(b"\0").decode(),
            created_s=0.0,
            status=status,
            epoch=epoch,
            provenance=BlockProvenance(qber_ppm / 1_000_000, 0, 0.0),
        )


def privacy_amplify(block: np.ndarray, leakage_bits: int, secure_fraction: float,
                    cfg: DistillationConfig, seed: int, link_id: str = "",
                    epoch: int = 0, created_s: float = 0.0,
                    qber: float = 0.0, block_id: str | None = None,
                    enforce_min_block: bool = True) -> SecretKeyBlock:
    """Compress a reconciled block with a seeded Toeplitz hash.

    Output length is ``floor(secure_fraction * n) - margin``, floored at
    zero and additionally capped at ``n - leakage_bits - margin`` so the
    accounting stays conservative regardless of the bound used.
    """
    block = np.ascontiguousarray(block, dtype=np.uint8)
    n = block.size
    if enforce_min_block and n < cfg.min_pa_block_bits:
        raise BlockDeferredError(
            f"block of {n} bits below the {cfg.min_pa_block_bits}-bit minimum")
    m = int(np.floor(secure_fraction * n)) - cfg.pa_security_margin_bits
    m = min(m, n - leakage_bits - cfg.pa_security_margin_bits)
    m = max(0, m)
    out = toeplitz_hash(block, seed, m, path="ntt") if m else np.zeros(0, dtype=np.uint8)
    key = bytearray(np.packbits(out).tobytes()) if m else bytearray()
    blk = SecretKeyBlock(
        id=block_id or f"{link_id}:{epoch}",
        bits=key,
        bit_length=m,
        link_id=link_id,
        created_s=created_s,
        status=STATUS_FRESH if m else STATUS_CONSUMED,
        epoch=epoch,
        provenance=BlockProvenance(qber, leakage_bits, secure_fraction),
    )
    return blk


@dataclass
class EpochResult:
    """Telemetry for one processed (or aborted) distillation epoch."""

    epoch: int
    qber: float
    aborted: bool
    leakage_bits: int = 0
    secure_fraction: float = 0.0
    sifted_bits: int = 0
    secure_bits: int = 0
    alice_block: SecretKeyBlock | None = None
    bob_block: SecretKeyBlock | None = None
    mismatch_discarded: bool = False


class Distiller:
    """Per-link distillation pipeline.

    Feed sifted pairs; whenever the accumulator reaches the configured
    block size an epoch is processed and an :class:`EpochResult` is
    emitted. The same object produces both endpoints' key blocks (error
    correction reconciles the receiver copy against the sender copy).

    ``bound`` selects the secure-fraction computation:
    ``("decoy", DecoyStats)``, ``("dps", None)`` or ``("fixed", float)``.
    """

    def __init__(self, link_id: str, cfg: DistillationConfig,
                 bound: tuple, seed: int = 0):
        self.link_id = link_id
        self.cfg = cfg
        self.bound = bound
        self._rng = np.random.default_rng(seed)
        self._alice: list[np.ndarray] = []
        self._bob: list[np.ndarray] = []
        self._pending = 0
        self._epoch = 0
        kind = bound[0]
        if kind not in ("decoy", "dps", "fixed"):
            raise InvalidArgumentError(f"unknown bound kind {kind!r}")

    @property
    def pending_bits(self) -> int:
        return self._pending

    def feed(self, pair: SiftedPair, now_s: float = 0.0) -> list[EpochResult]:
        """Accumulate a sifted pair; process any full epochs."""
        if len(pair):
            self._alice.append(pair.alice_bits)
            self._bob.append(pair.bob_bits)
            self._pending += len(pair)
        out = []
        while self._pending >= self.cfg.sifted_block_bits:
            out.append(self._process(now_s))
        return out

    def _take_block(self) -> tuple[np.ndarray, np.ndarray]:
        alice = np.concatenate(self._alice)
        bob = np.concatenate(self._bob)
        nb = self.cfg.sifted_block_bits
        rest_a, rest_b = alice[nb:], bob[nb:]
        self._alice = [rest_a] if rest_a.size else []
        self._bob = [rest_b] if rest_b.size else []
        self._pending = int(rest_a.size)
        return alice[:nb], bob[:nb]

    def _secure_fraction(self, qber: float, ec_leak_fraction: float) -> float:
        kind = self.bound[0]
        if kind == "decoy":
            return decoy_secure_fraction(self.bound[1], ec_leak_fraction)
        if kind == "dps":
            return dps_secure_fraction(qber, ec_leak_fraction)
        return max(0.0, float(self.bound[1]) - ec_leak_fraction)

    def _process(self, now_s: float) -> EpochResult:
        alice, bob = self._take_block()
        epoch = self._epoch
        self._epoch += 1
        sifted_bits = alice.size

        est, _ = _estimate(alice, bob, self.cfg.disclose_fraction,
                           int(self._rng.integers(2**62)), now_s)
        keep = est[1]
        alice, bob = keep
        qber = est[0]

        try:
            rate = select_ec_rate(qber)
        except BlockAbortError:
            self._epoch_discard()
            return EpochResult(epoch, qber, aborted=True, sifted_bits=sifted_bits)

        perm = self._rng.permutation(alice.size)
        alice = alice[perm]
        bob = bob[perm]

        if self.cfg.ec_mode == "cascade":
            qber_for_ec = min(0.499, max(qber, 1.0 / alice.size, 1e-4))
            corrected, leakage, _ts = cascade_reconcile(
                alice, bob, qber_for_ec,
                CascadeConfig(passes=self.cfg.cascade_passes),
                seed=int(self._rng.integers(2**62)))
            bob = corrected
        else:
            # rate-table mode: leakage follows the coding rate and the
            # decoder is assumed to succeed (no executable LDPC here)
            leakage = int(round((1.0 - rate) * alice.size))
            bob = alice.copy()

        if not np.array_equal(alice, bob):
            self._epoch_discard()
            return EpochResult(epoch, qber, aborted=True, sifted_bits=sifted_bits,
                               mismatch_discarded=True)

        ec_leak_fraction = leakage / alice.size
        fraction = self._secure_fraction(qber, ec_leak_fraction)
        pa_seed = int(self._rng.integers(2**62))
        common = dict(leakage_bits=leakage, secure_fraction=fraction,
                      cfg=self.cfg, seed=pa_seed, link_id=self.link_id,
                      epoch=epoch, created_s=now_s, qber=qber,
                      enforce_min_block=False)
        a_blk = privacy_amplify(alice, block_id=f"{self.link_id}:{epoch}", **common)
        b_blk = privacy_amplify(bob, block_id=f"{self.link_id}:{epoch}", **common)
        return EpochResult(epoch, qber, aborted=False, leakage_bits=leakage,
                           secure_fraction=fraction, sifted_bits=sifted_bits,
                           secure_bits=a_blk.bit_length,
                           alice_block=a_blk, bob_block=b_blk)

    def _epoch_discard(self) -> None:
        # aborted epochs drop the block; the accumulator already holds
        # only the remainder
        pass


def _estimate(alice: np.ndarray, bob: np.ndarray, fraction: float,
              seed: int, now_s: float):
    pair = SiftedPair("", 0, alice, bob, 0, 0.0)
    est, reduced = estimate_qber(pair, fraction, seed, now_s)
    return (est.rate, (reduced.alice_bits, reduced.bob_bits)), est
