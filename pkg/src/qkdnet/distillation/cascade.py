"""Cascade information reconciliation (parallel-message flavor).

The receiver corrects its string against parity answers about the
sender's string. Parities are exchanged in batches per pass; within a
pass, mismatched blocks are resolved by bisection (one new parity per
level — the second half is inferred from the block parity). A bit flip
toggles the block parity in every earlier pass, re-queueing blocks for
further bisection (the cascade effect).

Pass structure: pass 1 uses contiguous blocks of
``k1 = ceil(0.73 / qber_est)``; each later pass doubles the block size
and applies a fresh seeded permutation.

A clean first pass (every top-level parity matches) is accepted as
evidence of an error-free block and the protocol stops there, so the
no-error leakage is exactly the pass-1 parity count. Once anything was
corrected, the remaining passes run and a confirmation sweep exchanges
parities of random index subsets; any mismatch is bisected like a
regular block and correction continues until a full sweep matches. A
surviving error pattern then has probability 2**-confirm_parities of
going unnoticed.

Leakage accounting: every parity answer the sender discloses counts one
bit. Answers are memoized, so re-asking about an unchanged sender range
is free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError


@dataclass(frozen=True)
class CascadeConfig:
    passes: int = 4
    block_coeff: float = 0.73
    confirm_parities: int = 32
    max_confirm_rounds: int = 64


@dataclass
class CascadeTranscript:
    """Per-pass message batches and totals, for inspection and tests."""

    top_parities_per_pass: list[int] = field(default_factory=list)
    bisection_parities: int = 0
    confirm_parities: int = 0
    confirm_rounds: int = 0
    errors_corrected: int = 0
    message_batches: int = 0


class _AliceOracle:
    """Answers parity queries about the sender string, counting each
    newly disclosed parity as one leaked bit."""

    def __init__(self, alice: np.ndarray):
        self._bits = alice
        self._memo: dict = {}
        self.leakage = 0

    def parity(self, key, indices: np.ndarray) -> int:
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        p = int(np.bitwise_xor.reduce(self._bits[indices])) if indices.size else 0
        self._memo[key] = p
        self.leakage += 1
        return p


def cascade_reconcile(alice: np.ndarray, bob: np.ndarray, qber_est: float,
                      cfg: CascadeConfig = CascadeConfig(),
                      seed: int = 0) -> tuple[np.ndarray, int, CascadeTranscript]:
    """Correct ``bob`` toward ``alice``; returns
    ``(corrected, leakage_bits, transcript)``."""
    alice = np.ascontiguousarray(alice, dtype=np.uint8)
    bob = np.ascontiguousarray(bob, dtype=np.uint8).copy()
    if alice.size != bob.size:
        raise InvalidArgumentError("strings must have equal length")
    if not 0.0 < qber_est < 0.5:
        raise InvalidArgumentError("qber_est must be in (0, 0.5)")
    n = alice.size
    if n == 0:
        return bob, 0, CascadeTranscript()

    rng = np.random.default_rng(seed)
    oracle = _AliceOracle(alice)
    ts = CascadeTranscript()

    k1 = max(2, int(np.ceil(cfg.block_coeff / qber_est)))
    perms: list[np.ndarray] = []
    block_sizes: list[int] = []
    # diff[p][b]: current parity mismatch of block b in pass p
    diffs: list[np.ndarray] = []
    bounds: list[np.ndarray] = []   # block start offsets per pass

    def block_of(p: int, pos: int) -> int:
        return pos // block_sizes[p]

    def block_indices(p: int, b: int) -> np.ndarray:
        k = block_sizes[p]
        return perms[p][b * k:(b + 1) * k]

    def bob_parity(indices: np.ndarray) -> int:
        return int(np.bitwise_xor.reduce(bob[indices])) if indices.size else 0

    pos_in_perm: list[np.ndarray] = []  # inverse permutation per pass

    def bisect(p: int, b: int) -> int:
        """Binary-search the odd-parity block, flip the located bit,
        and return its index in the string."""
        k = block_sizes[p]
        lo, hi = b * k, min((b + 1) * k, n)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            a_par = oracle.parity(("blk", p, lo, mid), perms[p][lo:mid])
            if a_par != bob_parity(perms[p][lo:mid]):
                hi = mid
            else:
                lo = mid
        bit = int(perms[p][lo])
        bob[bit] ^= 1
        return bit

    def register_flip(bit: int, upto_pass: int) -> None:
        for p in range(upto_pass + 1):
            diffs[p][block_of(p, int(pos_in_perm[p][bit]))] ^= 1

    def drain(upto_pass: int) -> None:
        """Resolve every odd-parity block across all prepared passes."""
        while True:
            target = None
            for p in range(upto_pass + 1):
                odd = np.nonzero(diffs[p])[0]
                if odd.size:
                    target = (p, int(odd[0]))
                    break
            if target is None:
                return
            p, b = target
            before = oracle.leakage
            bit = bisect(p, b)
            ts.bisection_parities += oracle.leakage - before
            ts.errors_corrected += 1
            register_flip(bit, upto_pass)

    for p in range(cfg.passes):
        if p > 0 and ts.errors_corrected == 0:
            # clean first pass: accept the block as error-free
            return bob, oracle.leakage, ts
        k = min(k1 << p, n)
        perm = np.arange(n, dtype=np.int64) if p == 0 else rng.permutation(n).astype(np.int64)
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n, dtype=np.int64)
        perms.append(perm)
        pos_in_perm.append(inv)
        block_sizes.append(k)
        n_blocks = (n + k - 1) // k
        diff = np.zeros(n_blocks, dtype=np.uint8)
        before = oracle.leakage
        for b in range(n_blocks):
            idx = block_indices(p, b)
            a_par = oracle.parity(("blk", p, b * k, min((b + 1) * k, n)), idx)
            diff[b] = a_par ^ bob_parity(idx)
        ts.top_parities_per_pass.append(oracle.leakage - before)
        ts.message_batches += 1
        diffs.append(diff)
        drain(p)

    if ts.errors_corrected == 0:
        return bob, oracle.leakage, ts

    # confirmation sweep: random-subset parities until a clean round
    last = cfg.passes - 1
    for round_no in range(cfg.max_confirm_rounds):
        clean = True
        ts.confirm_rounds += 1
        ts.message_batches += 1
        for j in range(cfg.confirm_parities):
            mask = rng.random(n) < 0.5
            idx = np.nonzero(mask)[0].astype(np.int64)
            if idx.size == 0:
                continue
            key = ("confirm", round_no, j)
            a_par = oracle.parity(key, idx)
            ts.confirm_parities += 1
            if a_par == bob_parity(idx):
                continue
            clean = False
            # bisect within the subset, then cascade through the passes
            lo, hi = 0, idx.size
            while hi - lo > 1:
                mid = (lo + hi) // 2
                sub = idx[lo:mid]
                a_sub = oracle.parity((key, lo, mid), sub)
                ts.bisection_parities += 1
                if a_sub != bob_parity(sub):
                    hi = mid
                else:
                    lo = mid
            bit = int(idx[lo])
            bob[bit] ^= 1
            ts.errors_corrected += 1
            register_flip(bit, last)
            drain(last)
        if clean:
            break

    return bob, oracle.leakage, ts
