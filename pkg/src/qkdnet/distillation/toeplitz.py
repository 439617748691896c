"""Toeplitz 2-universal hashing over GF(2).

The m x n Toeplitz matrix is parameterized by ``n + m - 1`` diagonal
bits ``d`` expanded from a seed::

    T[i, j] = d[j - i]            for j >= i   (main and upper diagonals)
    T[i, j] = d[n - 1 + (i - j)]  for j <  i   (lower diagonals)

so a seed expanding to a single leading one is the identity band and the
hash returns the first m input bits.

Two evaluation paths produce bit-identical results:

* ``naive``: direct matrix-vector product over GF(2) using packed rows;
* ``ntt``: the product is written as one linear convolution of 0/1
  vectors, evaluated exactly in the prime field (coefficients are at
  most n < p) and reduced mod 2. Operands longer than the field's
  transform capacity are chunked with overlap-add.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from .ntt import conv_mod2_large

_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)


def expand_toeplitz_seed(seed: int, n: int, m: int) -> np.ndarray:
    """Documented seed expansion: ``n + m - 1`` diagonal bits from the
    numpy PCG64 stream keyed by the seed."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n + m - 1, dtype=np.uint8)


def _coeffs(diag: np.ndarray, n: int, m: int) -> np.ndarray:
    """Diagonal coefficient C[delta + (m-1)] = T[i, i+delta] for
    delta in [-(m-1), n-1]."""
    c = np.empty(n + m - 1, dtype=np.uint8)
    c[m - 1:] = diag[:n]                       # delta >= 0
    if m > 1:
        c[:m - 1] = diag[n + m - 2:n - 1:-1]   # delta = -(m-1) .. -1
    return c


def _hash_naive(bits: np.ndarray, diag: np.ndarray, m: int) -> np.ndarray:
    n = bits.size
    c = _coeffs(diag, n, m)
    packed_x = np.packbits(bits)
    out = np.empty(m, dtype=np.uint8)
    for i in range(m):
        row = c[m - 1 - i:m - 1 - i + n]
        masked = np.packbits(row) & packed_x
        out[i] = _POPCOUNT[masked].sum() & 1
    return out


def _hash_ntt(bits: np.ndarray, diag: np.ndarray, m: int) -> np.ndarray:
    n = bits.size
    c = _coeffs(diag, n, m)
    conv = conv_mod2_large(bits[::-1], c)
    # output[i] = sum_j x[j] * C[(j - i) + (m - 1)] = conv(x_rev, C)[n + m - 2 - i]
    return conv[n - 1:n + m - 1][::-1].copy()


def toeplitz_hash(bits: np.ndarray, seed: int, m: int,
                  path: str = "ntt") -> np.ndarray:
    """Compress an n-bit string to m bits with a seeded Toeplitz matrix."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    n = bits.size
    if m > n:
        raise InvalidArgumentError(f"output length {m} exceeds input length {n}")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    diag = expand_toeplitz_seed(seed, n, m)
    return toeplitz_hash_with_diagonals(bits, diag, m, path)


def toeplitz_hash_with_diagonals(bits: np.ndarray, diag: np.ndarray, m: int,
                                 path: str = "ntt") -> np.ndarray:
    """Same as :func:`toeplitz_hash` with explicit diagonal bits."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    n = bits.size
    if m > n:
        raise InvalidArgumentError(f"output length {m} exceeds input length {n}")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if diag.size != n + m - 1:
        raise InvalidArgumentError("diagonal vector must have length n + m - 1")
    if path == "naive":
        return _hash_naive(bits, diag, m)
    if path == "ntt":
        return _hash_ntt(bits, diag, m)
    raise InvalidArgumentError(f"unknown path {path!r}")
