"""Scale-invariant leveled RLWE scheme over Z_q[x]/(x^n + 1).

Messages live in the upper bits of a single composite modulus q (delta =
floor(q/p)), so ciphertext-by-ciphertext multiplication rescales by p/q and
noise grows by an additive number of bits per level instead of doubling.  No
modulus switching is needed; levels are a depth counter.

q is a product of 30-bit NTT primes sized from (n, p, L) so that a depth-L
circuit keeps positive noise headroom.  Ciphertext components are stored as
RNS residue matrices of shape (num_primes, n) in the coefficient domain.
Exact tensor products for multiplication run over an auxiliary CRT basis wide
enough to hold n * (q/2)^2 without wraparound.

Secrets are ternary, errors centered binomial.  Key generation is
deterministic in the seed; encryption draws from a separate, OS-seeded stream.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import KeyMismatchError, NoiseExhaustedError, ParamError
from .ntt import find_ntt_primes, ntt_context
from .params import HEParams
from .._modmath import centered

_CBD_ETA = 8  # centered binomial: sum of eta coin differences, bound eta, sigma = 2
_RELIN_BASE_BITS = 30


def _rng_from_seed(seed: bytes, label: bytes) -> np.random.Generator:
    digest = hashlib.sha256(label + seed).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


@dataclass
class RlweCiphertext:
    components: list[np.ndarray]  # each (num_q_primes, n) int64
    level: int
    noise_bits: float  # log2 of the absolute noise bound
    key_id: bytes


@dataclass
class RlweSecretKey:
    s: np.ndarray  # ternary coefficients, int64 (n,)
    key_id: bytes


@dataclass
class RlwePublicKey:
    a: np.ndarray  # (num_q_primes, n)
    b: np.ndarray
    key_id: bytes


@dataclass
class RlweEvalKey:
    # NTT-domain tables, shape (digits, num_q_primes, n)
    a_hat: np.ndarray
    b_hat: np.ndarray
    key_id: bytes


@dataclass
class RlweKeySet:
    secret: RlweSecretKey
    public: RlwePublicKey
    evaluation: RlweEvalKey

    @property
    def key_id(self) -> bytes:
        return self.secret.key_id


def required_q_bits(n: int, p: int, levels: int) -> int:
    """Modulus size that keeps a depth-`levels` circuit decryptable."""
    fresh = 4 + math.ceil(math.log2(2 * n + 1))
    per_level = math.ceil(math.log2(n)) + p.bit_length() + 6
    return p.bit_length() + 2 + fresh + levels * per_level + 30


class RlweContext:
    """Derived tables for one parameter set."""

    def __init__(self, params: HEParams):
        self.params = params
        n, p = params.n, params.p
        self.n, self.p = n, p
        q_bits = required_q_bits(n, p, params.L)
        num_q = -(-q_bits // 29)  # primes are just under 2^30
        self.q_primes = find_ntt_primes(n, num_q)
        self.q = math.prod(self.q_primes)
        aux_bits = 2 * (self.q.bit_length() + 1) + n.bit_length() + 2
        num_aux = -(-aux_bits // 29)
        self.aux_primes = find_ntt_primes(n, num_aux, below=min(self.q_primes))
        self.aux_modulus = math.prod(self.aux_primes)
        self.delta = self.q // p
        self.q_ntts = [ntt_context(q, n) for q in self.q_primes]
        self.aux_ntts = [ntt_context(q, n) for q in self.aux_primes]
        self.plain_ntt = ntt_context(p, n)
        self.delta_rns = np.array([self.delta % q for q in self.q_primes], dtype=np.int64)
        # CRT reconstruction constants for both bases
        self._q_crt = self._crt_consts(self.q_primes, self.q)
        self._aux_crt = self._crt_consts(self.aux_primes, self.aux_modulus)
        self.relin_base = 1 << _RELIN_BASE_BITS
        self.relin_digits = -(-self.q.bit_length() // _RELIN_BASE_BITS) + 1
        # fresh noise: the error polynomials contribute ~4 + log2(2n+1) bits,
        # but the delta-rounding remainder (q mod p) * m / p dominates at ~p bits
        self.fresh_noise_bits = _log2_sum(4.0 + math.log2(2 * n + 1), math.log2(p))
        self.max_noise_bits = math.log2(self.delta) - 1.0

    @staticmethod
    def _crt_consts(primes: list[int], modulus: int) -> list[int]:
        consts = []
        for q in primes:
            m_i = modulus // q
            consts.append(m_i * pow(m_i, -1, q))
        return consts

    # --- representation changes -------------------------------------------------

    def to_rns(self, coeffs) -> np.ndarray:
        """Signed coefficients (..., n) -> residue tensor (..., primes, n)."""
        coeffs = np.asarray(coeffs)
        out = np.empty(coeffs.shape[:-1] + (len(self.q_primes), self.n), dtype=np.int64)
        for i, q in enumerate(self.q_primes):
            out[..., i, :] = (coeffs % q).astype(np.int64)
        return out

    def from_rns_centered(self, residues: np.ndarray) -> np.ndarray:
        """Residues (..., primes, n) -> centered big-int coefficients (..., n)."""
        acc = np.zeros(residues.shape[:-2] + (self.n,), dtype=object)
        for i, c in enumerate(self._q_crt):
            acc += residues[..., i, :].astype(object) * c
        acc %= self.q
        return np.where(acc > self.q // 2, acc - self.q, acc)

    def _big_multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exact negacyclic product of centered big-int polys via the aux basis.

        Accepts any matching leading axes; transforms act on the last axis.
        """
        acc = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=object)
        for ntt, c in zip(self.aux_ntts, self._aux_crt):
            r = ntt.multiply(a % ntt.prime, b % ntt.prime)
            acc += r.astype(object) * c
        acc %= self.aux_modulus
        return np.where(acc > self.aux_modulus // 2, acc - self.aux_modulus, acc)

    def rns_multiply(self, x: np.ndarray, small: np.ndarray) -> np.ndarray:
        """Product of an RNS poly with a small-coefficient poly, per prime."""
        out = np.empty_like(x)
        for i, ntt in enumerate(self.q_ntts):
            out[i] = ntt.multiply(x[i], small % ntt.prime)
        return out

    # --- slot packing -----------------------------------------------------------

    def encode(self, slots: np.ndarray) -> np.ndarray:
        """Slot vector (length <= n, residues mod p) -> plaintext poly coeffs."""
        full = np.zeros(self.n, dtype=np.int64)
        full[: len(slots)] = slots
        return self.plain_ntt.inverse(full)

    def decode(self, coeffs: np.ndarray) -> np.ndarray:
        return self.plain_ntt.forward(coeffs)

    # --- sampling ---------------------------------------------------------------

    def _cbd(self, rng: np.random.Generator) -> np.ndarray:
        bits = rng.integers(0, 2, size=(2 * _CBD_ETA, self.n), dtype=np.int64)
        return bits[:_CBD_ETA].sum(axis=0) - bits[_CBD_ETA:].sum(axis=0)

    def _ternary(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(-1, 2, size=self.n, dtype=np.int64)

    def _uniform_rns(self, rng: np.random.Generator) -> np.ndarray:
        return np.stack(
            [rng.integers(0, q, size=self.n, dtype=np.int64) for q in self.q_primes]
        )

    # --- key generation ---------------------------------------------------------

    def keygen(self, seed: bytes) -> RlweKeySet:
        key_id = hashlib.sha256(b"rlwe-key-id" + seed).digest()[:16]
        rng = _rng_from_seed(seed, b"rlwe-keygen")
        s = self._ternary(rng)
        a = self._uniform_rns(rng)
        e = self._cbd(rng)
        b = self._sub(self._neg(self.rns_multiply(a, s)), self.to_rns(e))
        # evaluation key: b_j = -(a_j s) + e_j + T^j s^2
        s2 = self._big_multiply(s.astype(object), s.astype(object))
        digits = self.relin_digits
        a_hat = np.empty((digits, len(self.q_primes), self.n), dtype=np.int64)
        b_hat = np.empty_like(a_hat)
        power = 1
        for j in range(digits):
            a_j = self._uniform_rns(rng)
            e_j = self._cbd(rng)
            term = self.to_rns(s2 * power)
            b_j = self._add(self._add(self._neg(self.rns_multiply(a_j, s)), self.to_rns(e_j)), term)
            for i, ntt in enumerate(self.q_ntts):
                a_hat[j, i] = ntt.forward(a_j[i])
                b_hat[j, i] = ntt.forward(b_j[i])
            power *= self.relin_base
        return RlweKeySet(
            secret=RlweSecretKey(s=s, key_id=key_id),
            public=RlwePublicKey(a=a, b=b, key_id=key_id),
            evaluation=RlweEvalKey(a_hat=a_hat, b_hat=b_hat, key_id=key_id),
        )

    # --- RNS component arithmetic ----------------------------------------------

    def _mods(self) -> np.ndarray:
        return np.array(self.q_primes, dtype=np.int64)[:, None]

    def _add(self, x, y):
        return (x + y) % self._mods()

    def _sub(self, x, y):
        return (x - y) % self._mods()

    def _neg(self, x):
        return (-x) % self._mods()

    def _scalar_mul(self, x, w: int):
        out = np.empty_like(x)
        for i, q in enumerate(self.q_primes):
            out[i] = x[i] * (w % q) % q
        return out

    # --- encryption / decryption ------------------------------------------------

    def encrypt(self, pk: RlwePublicKey, slots: np.ndarray, rng: np.random.Generator) -> RlweCiphertext:
        m = self.encode(slots)
        u = self._ternary(rng)
        e1, e2 = self._cbd(rng), self._cbd(rng)
        dm = self.delta_rns[:, None] * (m % np.array(self.q_primes)[:, None]) % self._mods()
        c0 = self._add(self._add(self.rns_multiply(pk.b, u), self.to_rns(e1)), dm)
        c1 = self._add(self.rns_multiply(pk.a, u), self.to_rns(e2))
        return RlweCiphertext(
            components=[c0, c1],
            level=self.params.L,
            noise_bits=self.fresh_noise_bits,
            key_id=pk.key_id,
        )

    def _phase(self, sk: RlweSecretKey, ct: RlweCiphertext) -> np.ndarray:
        acc = ct.components[0].copy()
        power = self.to_rns(sk.s)
        acc = self._add(acc, self._rns_poly_product(ct.components[1], power))
        return acc

    def _rns_poly_product(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for i, ntt in enumerate(self.q_ntts):
            out[i] = ntt.multiply(x[i], y[i])
        return out

    def decrypt(self, sk: RlweSecretKey, ct: RlweCiphertext) -> np.ndarray:
        if sk.key_id != ct.key_id:
            raise KeyMismatchError("ciphertext was produced under a different key set")
        if self.noise_budget(ct) <= 0:
            raise NoiseExhaustedError(
                f"noise budget exhausted ({self.noise_budget(ct):.1f} bits)"
            )
        slots, _ = self._decrypt_measured(sk, ct)
        return slots

    def _decrypt_measured(self, sk: RlweSecretKey, ct: RlweCiphertext):
        """Decrypt and return (slots, measured noise bits)."""
        x = self.from_rns_centered(self._phase(sk, ct))
        num = x * self.p
        m = (num + self.q // 2) // self.q
        err = num - m * self.q
        max_err = max(int(abs(int(v))) for v in err)
        measured = math.log2(max_err / self.p) if max_err else 0.0
        slots = self.decode((m % self.p).astype(np.int64))
        return slots, measured

    def measured_noise_budget(self, sk: RlweSecretKey, ct: RlweCiphertext) -> float:
        _, measured = self._decrypt_measured(sk, ct)
        return self.max_noise_bits - measured

    def noise_budget(self, ct: RlweCiphertext) -> float:
        return self.max_noise_bits - ct.noise_bits

    # --- homomorphic operations -------------------------------------------------

    def add(self, a: RlweCiphertext, b: RlweCiphertext) -> RlweCiphertext:
        return RlweCiphertext(
            components=[self._add(x, y) for x, y in zip(a.components, b.components)],
            level=min(a.level, b.level),
            noise_bits=_log2_sum(a.noise_bits, b.noise_bits),
            key_id=a.key_id,
        )

    def add_plain(self, ct: RlweCiphertext, slots: np.ndarray) -> RlweCiphertext:
        m = self.encode(slots)
        dm = self.delta_rns[:, None] * (m % np.array(self.q_primes)[:, None]) % self._mods()
        comps = [self._add(ct.components[0], dm)] + [c.copy() for c in ct.components[1:]]
        return RlweCiphertext(comps, ct.level, ct.noise_bits, ct.key_id)

    def mul_scalar(self, ct: RlweCiphertext, w: int) -> RlweCiphertext:
        w_abs = abs(int(w)) or 1
        # message wraps mod p contribute noise via the delta rounding remainder
        extra = math.log2(self.p) + math.log2(w_abs)
        noise = _log2_sum(ct.noise_bits + math.log2(w_abs), extra)
        return RlweCiphertext(
            components=[self._scalar_mul(c, int(w)) for c in ct.components],
            level=ct.level,
            noise_bits=noise,
            key_id=ct.key_id,
        )

    def mul_plain_vector(self, ct: RlweCiphertext, slots: np.ndarray) -> RlweCiphertext:
        m = centered(self.encode(slots), self.p)
        bound = max(int(np.abs(m).max()), 1)
        comps = [self.rns_multiply(c, m) for c in ct.components]
        growth = math.log2(self.n) + math.log2(bound)
        noise = _log2_sum(ct.noise_bits + growth, math.log2(self.p) + growth)
        return RlweCiphertext(comps, ct.level, noise, ct.key_id)

    def mul(self, a: RlweCiphertext, b: RlweCiphertext, evk: RlweEvalKey) -> RlweCiphertext:
        return self.mul_many([a], [b], evk)[0]

    def mul_many(
        self, a_cts: list, b_cts: list, evk: RlweEvalKey
    ) -> list:
        """Pairwise ct*ct products, batched so the NTT/CRT passes are shared."""
        c0, c1 = (
            self.from_rns_centered(np.stack([ct.components[k] for ct in a_cts]))
            for k in (0, 1)
        )
        d0, d1 = (
            self.from_rns_centered(np.stack([ct.components[k] for ct in b_cts]))
            for k in (0, 1)
        )
        t0 = self._scale_down(self._big_multiply(c0, d0))
        t1 = self._scale_down(
            self._big_multiply(c0, d1) + self._big_multiply(c1, d0)
        )
        t2 = self._scale_down(self._big_multiply(c1, d1))
        r0, r1 = self._relinearize(t2, evk)
        new0 = self._add(self.to_rns(t0), r0)
        new1 = self._add(self.to_rns(t1), r1)
        relin_noise = (
            _RELIN_BASE_BITS - 1 + math.log2(self.relin_digits) + math.log2(self.n) + 4
        )
        out = []
        for i, (a, b) in enumerate(zip(a_cts, b_cts)):
            grown = (
                max(a.noise_bits, b.noise_bits) + math.log2(self.n) + math.log2(self.p) + 3
            )
            out.append(
                RlweCiphertext(
                    components=[new0[i], new1[i]],
                    level=min(a.level, b.level) - 1,
                    noise_bits=_log2_sum(grown, relin_noise),
                    key_id=a.key_id,
                )
            )
        return out

    def _scale_down(self, big: np.ndarray) -> np.ndarray:
        """round(p * x / q) on centered big-int coefficients, reduced mod q."""
        num = big * (2 * self.p)
        scaled = (num + self.q) // (2 * self.q)
        reduced = (scaled + self.q // 2) % self.q - self.q // 2
        return reduced

    def _relinearize(self, t2: np.ndarray, evk: RlweEvalKey):
        """Fold the degree-2 component back into two components.

        t2 has shape (..., n); returns residue tensors (..., primes, n).
        """
        digits = []
        x = t2.copy()
        base = self.relin_base
        for _ in range(self.relin_digits):
            d = ((x + base // 2) % base) - base // 2
            digits.append(d)
            x = (x - d) // base
        shape = t2.shape[:-1] + (len(self.q_primes), self.n)
        acc0 = np.zeros(shape, dtype=np.int64)
        acc1 = np.zeros_like(acc0)
        for j, d in enumerate(digits):
            d64 = d.astype(np.int64)
            for i, ntt in enumerate(self.q_ntts):
                d_hat = ntt.forward(d64)
                acc0[..., i, :] = (
                    acc0[..., i, :] + d_hat * evk.b_hat[j, i] % ntt.prime
                ) % ntt.prime
                acc1[..., i, :] = (
                    acc1[..., i, :] + d_hat * evk.a_hat[j, i] % ntt.prime
                ) % ntt.prime
        for i, ntt in enumerate(self.q_ntts):
            acc0[..., i, :] = ntt.inverse(acc0[..., i, :])
            acc1[..., i, :] = ntt.inverse(acc1[..., i, :])
        return acc0, acc1


def _log2_sum(a_bits: float, b_bits: float) -> float:
    hi, lo = max(a_bits, b_bits), min(a_bits, b_bits)
    return hi + math.log2(1.0 + 2.0 ** (lo - hi))


@lru_cache(maxsize=16)
def _context_cached(p: int, L: int, n: int) -> RlweContext:
    return RlweContext(HEParams(p=p, L=L, n=n, backend="rlwe"))


def context_for(params: HEParams) -> RlweContext:
    if params.backend != "rlwe":
        raise ParamError("rlwe context requires rlwe backend params")
    return _context_cached(params.p, params.L, params.n)
