"""Negacyclic number-theoretic transforms over word-size primes.

All transforms are length n = 2^k over Z_q[x]/(x^n + 1) with q = 1 (mod 2n).
Butterfly products stay below 2^60, so everything runs in vectorized int64.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .._modmath import is_prime, prev_prime_congruent


def find_ntt_primes(n: int, count: int, bits: int = 30, below: int | None = None) -> list[int]:
    """`count` distinct primes = 1 (mod 2n), descending from 2^bits."""
    primes = []
    candidate = (below - 1) if below else (1 << bits) - 1
    while len(primes) < count:
        candidate = prev_prime_congruent(candidate, 1, 2 * n)
        primes.append(candidate)
        candidate -= 1
    return primes


def _primitive_root_2n(q: int, n: int) -> int:
    """A primitive 2n-th root of unity mod q."""
    exponent = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, exponent, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError(f"no 2n-th root of unity mod {q}")


def _bit_reverse_perm(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    perm = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (perm & 1)
        perm >>= 1
    return rev


class NttContext:
    """Precomputed tables for one (prime, n) pair."""

    def __init__(self, prime: int, n: int):
        if prime % (2 * n) != 1 or not is_prime(prime):
            raise ValueError(f"{prime} is not an NTT prime for n={n}")
        self.prime = prime
        self.n = n
        # butterflies multiply two residues; beyond 31 bits that overflows
        # int64, so fall back to exact object-dtype arithmetic
        self.big = prime.bit_length() > 31
        psi = _primitive_root_2n(prime, n)
        self.psi_powers = self._powers(psi, n)
        self.inv_psi_powers = self._powers(pow(psi, -1, prime), n)
        self.inv_n = pow(n, -1, prime)
        omega = psi * psi % prime
        self.perm = _bit_reverse_perm(n)
        self.fwd_twiddles = self._stage_twiddles(omega)
        self.inv_twiddles = self._stage_twiddles(pow(omega, -1, prime))

    def _powers(self, base: int, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        acc = 1
        for i in range(count):
            out[i] = acc
            acc = acc * base % self.prime
        return out

    def _stage_twiddles(self, omega: int) -> list[np.ndarray]:
        tables = []
        half = 1
        while half < self.n:
            w_m = pow(omega, self.n // (2 * half), self.prime)
            tables.append(self._powers(w_m, half))
            half *= 2
        return tables

    def _cyclic(self, a: np.ndarray, twiddles: list[np.ndarray]) -> np.ndarray:
        q = self.prime
        a = a[..., self.perm]
        for table in twiddles:
            half = len(table)
            shape = a.shape[:-1] + (-1, 2, half)
            a = a.reshape(shape)
            t = a[..., 1, :] * table % q
            hi = (a[..., 0, :] + t) % q
            lo = (a[..., 0, :] - t) % q
            a = np.stack([hi, lo], axis=-2).reshape(a.shape[:-3] + (-1,))
        return a

    def _lift(self, a: np.ndarray) -> np.ndarray:
        if self.big:
            return np.asarray(a).astype(object)
        return np.asarray(a, dtype=np.int64)

    def _settle(self, a: np.ndarray) -> np.ndarray:
        return a.astype(np.int64) if self.big else a

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Negacyclic forward transform of the last axis (length n)."""
        a = self._lift(a) % self.prime
        psi = self._lift(self.psi_powers)
        return self._settle(self._cyclic(a * psi % self.prime, self.fwd_twiddles))

    def inverse(self, a_hat: np.ndarray) -> np.ndarray:
        a = self._cyclic(self._lift(a_hat), self.inv_twiddles)
        a = a * self.inv_n % self.prime
        return self._settle(a * self._lift(self.inv_psi_powers) % self.prime)

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Negacyclic convolution mod prime."""
        a_hat, b_hat = self.forward(a), self.forward(b)
        if self.big:
            a_hat = a_hat.astype(object)
        return self.inverse(a_hat * b_hat % self.prime)


@lru_cache(maxsize=128)
def ntt_context(prime: int, n: int) -> NttContext:
    return NttContext(prime, n)
