"""Modular integer helpers shared by the HE backends and the plaintext engine."""

from __future__ import annotations

import numpy as np

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime_congruent(start: int, residue: int, modulus: int) -> int:
    """Smallest prime >= start with prime % modulus == residue."""
    n = start + (residue - start) % modulus
    while not is_prime(n):
        n += modulus
    return n


def prev_prime_congruent(start: int, residue: int, modulus: int) -> int:
    n = start - (start - residue) % modulus
    while n > 2 and not is_prime(n):
        n -= modulus
    if n <= 2:
        raise ValueError("no prime found below start")
    return n


def centered(values: np.ndarray, p: int) -> np.ndarray:
    """Map residues in [0, p) to the balanced representation (-p/2, p/2]."""
    v = np.asarray(values)
    return np.where(v > p // 2, v - p, v)


def to_residue(values, p: int) -> np.ndarray:
    """Reduce signed integers into [0, p)."""
    return np.asarray(values) % p


def _object_matmul(w: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    acc = w.astype(object) @ x.astype(object)
    return (acc % p).astype(np.int64)


def modmatmul(w: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    """Exact (w @ x) mod p for signed int64 w and residues x in [0, p).

    Picks the cheapest exact strategy: a single float64 BLAS matmul when all
    intermediate sums stay below 2**53, a two-limb split of x when the weights
    are small enough, and an arbitrary-precision fallback otherwise.
    """
    w = np.ascontiguousarray(w, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=np.int64)
    k = w.shape[1]
    if k == 0:
        return np.zeros((w.shape[0],) + x.shape[1:], dtype=np.int64)
    wmax = int(np.abs(w).max()) if w.size else 0
    if wmax == 0:
        return np.zeros((w.shape[0],) + x.shape[1:], dtype=np.int64)
    xmax = int(x.max(initial=0)) if x.size else 0

    # direct float64 path: |sum| <= k * wmax * xmax must be < 2^53
    if wmax * xmax * k < (1 << 53):
        acc = w.astype(np.float64) @ x.astype(np.float64)
        return (acc.astype(np.int64)) % p

    # two-limb split: x = hi * 2^s + lo with s = ceil(bits(p)/2)
    s = (p.bit_length() + 1) // 2
    lo = x & ((1 << s) - 1)
    hi = x >> s
    himax = xmax >> s
    if wmax * max(himax, min(xmax, (1 << s) - 1)) * k < (1 << 53):
        acc_lo = (w.astype(np.float64) @ lo.astype(np.float64)).astype(np.int64) % p
        acc_hi = (w.astype(np.float64) @ hi.astype(np.float64)).astype(np.int64) % p
        # fold acc_hi * 2^s back in without overflowing int64
        shift = s
        while shift > 0:
            step = min(shift, 62 - p.bit_length())
            acc_hi = (acc_hi << step) % p
            shift -= step
        return (acc_lo + acc_hi) % p

    return _object_matmul(w, x, p)


def modpow_elements(x: np.ndarray, e: int, p: int) -> np.ndarray:
    """Elementwise x**e mod p, overflow-safe for any p below 2^62."""
    result = np.ones_like(x)
    base = x % p
    while e > 0:
        if e & 1:
            result = modmul_elements(result, base, p)
        base = modmul_elements(base, base, p)
        e >>= 1
    return result


def _fold_shift(v: np.ndarray, shift: int, p: int) -> np.ndarray:
    """(v << shift) mod p without overflowing int64."""
    headroom = max(62 - p.bit_length(), 1)
    while shift > 0:
        step = min(shift, headroom)
        v = (v << step) % p
        shift -= step
    return v


def modmul_elements(a: np.ndarray, b, p: int) -> np.ndarray:
    """Elementwise a*b mod p for residues in [0, p), exact for p < 2^62.

    Large moduli use a two-limb split of both factors so every partial
    product stays below 2^62.
    """
    a = np.asarray(a)
    if p <= (1 << 31):
        return (a * b) % p
    b = np.asarray(b)
    s = (p.bit_length() + 1) // 2
    mask = (1 << s) - 1
    a_hi, a_lo = a >> s, a & mask
    b_hi, b_lo = b >> s, b & mask
    t2 = a_hi * b_hi % p
    t1 = (a_hi * b_lo + a_lo * b_hi) % p
    t0 = a_lo * b_lo % p
    acc = (_fold_shift(t2, s, p) + t1) % p
    return (_fold_shift(acc, s, p) + t0) % p


def horner_mod(coeffs, x: np.ndarray, p: int) -> np.ndarray:
    """Evaluate a polynomial (ascending coefficients, residues mod p)."""
    acc = np.full_like(x, 0)
    for c in reversed(list(coeffs)):
        acc = (modmul_elements(acc, x, p) + int(c) % p) % p
    return acc
