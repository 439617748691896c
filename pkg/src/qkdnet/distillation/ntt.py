"""Number-theoretic transform over the prime field p = 13 * 2**20 + 1.

The 2-adic valuation of p - 1 is 20, so power-of-two transforms exist up
to length 2**20. Transforms are iterative radix-2 with vectorized
butterflies on int64 arrays; all intermediate products stay below 2**63.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import InvalidArgumentError

NTT_PRIME = 13 * 2**20 + 1          # 13631489
MAX_TRANSFORM_LOG2 = 20
MAX_TRANSFORM = 1 << MAX_TRANSFORM_LOG2

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24 with the fixed base set."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _find_generator(p: int) -> int:
    """Smallest primitive root of the field."""
    factors = []
    m = p - 1
    d = 2
    while d * d <= m:
        if m % d == 0:
            factors.append(d)
            while m % d == 0:
                m //= d
        d += 1
    if m > 1:
        factors.append(m)
    for g in range(2, p):
        if all(pow(g, (p - 1) // f, p) != 1 for f in factors):
            return g
    raise AssertionError("no generator found")


def assert_field_parameters() -> None:
    """Startup sanity check: the modulus is prime and supports
    length-2**20 power-of-two transforms."""
    if not _is_prime(NTT_PRIME):
        raise AssertionError(f"{NTT_PRIME} is not prime")
    if (NTT_PRIME - 1) % MAX_TRANSFORM != 0:
        raise AssertionError(f"2**{MAX_TRANSFORM_LOG2} does not divide p - 1")


assert_field_parameters()
_GENERATOR = _find_generator(NTT_PRIME)


@lru_cache(maxsize=64)
def _stage_roots(n: int, inverse: bool) -> tuple:
    """Per-stage twiddle tables for a length-n transform."""
    root = pow(_GENERATOR, (NTT_PRIME - 1) // n, NTT_PRIME)
    if inverse:
        root = pow(root, NTT_PRIME - 2, NTT_PRIME)
    tables = []
    length = 2
    while length <= n:
        w = pow(root, n // length, NTT_PRIME)
        tw = np.empty(length // 2, dtype=np.int64)
        acc = 1
        for i in range(length // 2):
            tw[i] = acc
            acc = acc * w % NTT_PRIME
        tables.append(tw)
        length *= 2
    return tuple(tables)


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _transform(values: np.ndarray, inverse: bool) -> np.ndarray:
    n = len(values)
    if n == 0 or n & (n - 1):
        raise InvalidArgumentError("transform length must be a power of two")
    if n > MAX_TRANSFORM:
        raise InvalidArgumentError(
            f"transform length {n} exceeds the field's 2-adic capacity {MAX_TRANSFORM}")
    a = np.asarray(values, dtype=np.int64)[_bit_reversal(n)] % NTT_PRIME
    tables = _stage_roots(n, inverse)
    length = 2
    for tw in tables:
        half = length // 2
        blocks = a.reshape(-1, length)
        lo = blocks[:, :half].copy()
        hi = blocks[:, half:] * tw % NTT_PRIME
        blocks[:, :half] = (lo + hi) % NTT_PRIME
        blocks[:, half:] = (lo - hi) % NTT_PRIME
        length *= 2
    if inverse:
        n_inv = pow(n, NTT_PRIME - 2, NTT_PRIME)
        a = a * n_inv % NTT_PRIME
    return a


def ntt_forward(values: np.ndarray) -> np.ndarray:
    """Forward transform of a power-of-two-length vector mod p."""
    return _transform(values, inverse=False)


def ntt_inverse(values: np.ndarray) -> np.ndarray:
    """Inverse transform; ``ntt_inverse(ntt_forward(x)) == x``."""
    return _transform(values, inverse=True)


def ntt_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact linear convolution of integer vectors mod p.

    The result length ``len(a) + len(b) - 1`` must fit in a single
    field transform (<= 2**20 after power-of-two padding).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("convolution operands must be non-empty")
    if np.any(a < 0) or np.any(a >= NTT_PRIME) or np.any(b < 0) or np.any(b >= NTT_PRIME):
        raise InvalidArgumentError("entries must lie in [0, p)")
    out_len = a.size + b.size - 1
    n = 1 << (out_len - 1).bit_length()
    if n > MAX_TRANSFORM:
        raise InvalidArgumentError(
            f"convolution length {out_len} exceeds the field capacity")
    fa = ntt_forward(np.concatenate([a, np.zeros(n - a.size, dtype=np.int64)]))
    fb = ntt_forward(np.concatenate([b, np.zeros(n - b.size, dtype=np.int64)]))
    return ntt_inverse(fa * fb % NTT_PRIME)[:out_len]


def conv_mod2_large(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """GF(2) reduction of the linear convolution of two 0/1 vectors of
    arbitrary length.

    Long operands are split into chunks small enough for single field
    transforms; chunk contributions are exact integers below p, so the
    accumulated coefficients equal the true convolution and reduce mod 2.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out_len = a.size + b.size - 1
    if out_len <= MAX_TRANSFORM:
        return (ntt_convolve(a, b) & 1).astype(np.uint8)

    chunk = MAX_TRANSFORM // 2
    acc = np.zeros(out_len, dtype=np.int64)
    a_chunks = [(i, a[i:i + chunk]) for i in range(0, a.size, chunk)]
    b_chunks = [(j, b[j:j + chunk]) for j in range(0, b.size, chunk)]
    fb = {}
    for j, bc in b_chunks:
        n = MAX_TRANSFORM
        fb[j] = ntt_forward(np.concatenate([bc, np.zeros(n - bc.size, dtype=np.int64)]))
    for i, ac in a_chunks:
        fa = ntt_forward(np.concatenate([ac, np.zeros(MAX_TRANSFORM - ac.size,
                                                      dtype=np.int64)]))
        for j, bc in b_chunks:
            seg = ntt_inverse(fa * fb[j] % NTT_PRIME)[:ac.size + bc.size - 1]
            acc[i + j:i + j + seg.size] += seg
    return (acc & 1).astype(np.uint8)
