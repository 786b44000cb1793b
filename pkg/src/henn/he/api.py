"""Backend-independent homomorphic evaluation interface.

Wraps the simulator and RLWE backends behind one set of operations: keygen,
encrypt/decrypt, add/add_plain, mul/mul_plain, rotation (simulator only),
polynomial evaluation via a balanced power tree, and weighted accumulation
(linear_combine) used by the linear network layers.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from math import ceil, log2
from typing import Sequence

import numpy as np

from . import rlwe as _rlwe
from . import simulator as _sim
from .errors import BackendMismatchError, HeError, LevelExhaustedError
from .params import SIMULATOR, HEParams
from .._modmath import centered, modmatmul


@dataclass
class Ciphertext:
    params: HEParams
    impl: object

    @property
    def level(self) -> int:
        return self.impl.level

    @property
    def noise_budget(self) -> float:
        if self.params.backend == SIMULATOR:
            return self.impl.noise_budget
        return _rlwe.context_for(self.params).noise_budget(self.impl)

    @property
    def key_id(self) -> bytes:
        return self.impl.key_id


@dataclass
class SecretKey:
    params: HEParams
    impl: object

    @property
    def key_id(self) -> bytes:
        return self.impl.key_id


@dataclass
class PublicKey:
    params: HEParams
    impl: object

    @property
    def key_id(self) -> bytes:
        return self.impl.key_id


@dataclass
class EvalKey:
    params: HEParams
    impl: object


@dataclass
class KeySet:
    params: HEParams
    secret: SecretKey
    public: PublicKey
    evaluation: EvalKey

    @property
    def key_id(self) -> bytes:
        return self.secret.key_id


def keygen(params: HEParams, seed: bytes) -> KeySet:
    if params.backend == SIMULATOR:
        impl = _sim.keygen(params, seed)
    else:
        impl = _rlwe.context_for(params).keygen(seed)
    return KeySet(
        params=params,
        secret=SecretKey(params, impl.secret),
        public=PublicKey(params, impl.public),
        evaluation=EvalKey(params, impl.evaluation),
    )


def _check_slots(params: HEParams, slots) -> np.ndarray:
    arr = np.asarray(slots)
    if arr.ndim != 1:
        raise ValueError("slots must be a one-dimensional integer vector")
    if arr.size > params.slot_count:
        raise ValueError(f"{arr.size} slots exceed capacity {params.slot_count}")
    if arr.size and (int(arr.min()) < 0 or int(arr.max()) >= params.p):
        raise ValueError("slot values must already be reduced into [0, p)")
    full = np.zeros(params.slot_count, dtype=np.int64)
    full[: arr.size] = arr
    return full


def encrypt(pk: PublicKey, slots, rng: np.random.Generator | None = None) -> Ciphertext:
    params = pk.params
    full = _check_slots(params, slots)
    if params.backend == SIMULATOR:
        return Ciphertext(params, _sim.encrypt(params, pk.impl, full))
    if rng is None:
        rng = np.random.default_rng(secrets.randbits(128))
    return Ciphertext(params, _rlwe.context_for(params).encrypt(pk.impl, full, rng))


def decrypt(sk: SecretKey, ct: Ciphertext) -> np.ndarray:
    _check_pair(sk.params, ct.params)
    if sk.params.backend == SIMULATOR:
        return _sim.decrypt(ct.params, sk.impl, ct.impl)
    return _rlwe.context_for(ct.params).decrypt(sk.impl, ct.impl)


def noise_budget(ct: Ciphertext) -> float:
    return ct.noise_budget


def measured_noise_budget(sk: SecretKey, ct: Ciphertext) -> float:
    """Headroom from actual decryption noise (test mode; needs the secret key)."""
    if ct.params.backend == SIMULATOR:
        return ct.impl.noise_budget
    return _rlwe.context_for(ct.params).measured_noise_budget(sk.impl, ct.impl)


def _check_pair(a: HEParams, b: HEParams) -> None:
    if a != b:
        raise BackendMismatchError("operands use different parameter sets")


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a.params, b.params)
    if a.params.backend == SIMULATOR:
        return Ciphertext(a.params, _sim.add(a.params, a.impl, b.impl))
    return Ciphertext(a.params, _rlwe.context_for(a.params).add(a.impl, b.impl))


def add_plain(ct: Ciphertext, plain) -> Ciphertext:
    params = ct.params
    arr = np.asarray(plain, dtype=np.int64) % params.p
    if arr.ndim == 0:
        arr = np.full(params.slot_count, int(arr), dtype=np.int64)
    else:
        full = np.zeros(params.slot_count, dtype=np.int64)
        full[: arr.size] = arr
        arr = full
    if params.backend == SIMULATOR:
        return Ciphertext(params, _sim.add_plain(params, ct.impl, arr))
    return Ciphertext(params, _rlwe.context_for(params).add_plain(ct.impl, arr))


def mul(a: Ciphertext, b: Ciphertext, evk: EvalKey) -> Ciphertext:
    _check_pair(a.params, b.params)
    if a.level < 1 or b.level < 1:
        raise LevelExhaustedError(
            f"ct*ct multiply at level {min(a.level, b.level)} (needs >= 1)"
        )
    if a.params.backend == SIMULATOR:
        return Ciphertext(a.params, _sim.mul(a.params, a.impl, b.impl))
    return Ciphertext(a.params, _rlwe.context_for(a.params).mul(a.impl, b.impl, evk.impl))


def mul_plain(ct: Ciphertext, plain) -> Ciphertext:
    """Multiply by a plaintext scalar or slot vector; costs noise, not a level."""
    params = ct.params
    if np.isscalar(plain) or np.asarray(plain).ndim == 0:
        w = int(plain)
        if params.backend == SIMULATOR:
            return Ciphertext(params, _sim.mul_plain(params, ct.impl, w % params.p))
        w_centered = int(centered(np.int64(w % params.p), params.p))
        return Ciphertext(params, _rlwe.context_for(params).mul_scalar(ct.impl, w_centered))
    arr = np.asarray(plain, dtype=np.int64) % params.p
    full = np.zeros(params.slot_count, dtype=np.int64)
    full[: arr.size] = arr
    if params.backend == SIMULATOR:
        return Ciphertext(params, _sim.mul_plain(params, ct.impl, full))
    return Ciphertext(params, _rlwe.context_for(params).mul_plain_vector(ct.impl, full))


def rotate(ct: Ciphertext, steps: int) -> Ciphertext:
    if ct.params.backend != SIMULATOR:
        raise HeError("slot rotation is only provided by the simulator backend")
    return Ciphertext(ct.params, _sim.rotate(ct.params, ct.impl, steps))


def poly_depth(degree: int) -> int:
    return ceil(log2(degree)) if degree > 1 else (1 if degree == 1 else 0)


def eval_poly_ct(ct: Ciphertext, coeffs: Sequence[int], evk: EvalKey) -> Ciphertext:
    """Evaluate an integer-coefficient polynomial on every slot.

    Powers come from a balanced product tree, so the multiplicative depth is
    ceil(log2 degree) instead of Horner's degree-1.
    """
    p = ct.params.p
    coeffs = [int(c) % p for c in coeffs]
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    if not coeffs:
        return mul_plain(ct, 0)
    degree = len(coeffs) - 1
    if degree >= 2 and poly_depth(degree) > ct.level:
        raise LevelExhaustedError(
            f"degree {degree} needs depth {poly_depth(degree)}, level is {ct.level}"
        )
    powers: dict[int, Ciphertext] = {1: ct}

    def power(k: int) -> Ciphertext:
        if k not in powers:
            hi, lo = -(-k // 2), k // 2
            powers[k] = mul(power(hi), power(lo), evk)
        return powers[k]

    terms = [mul_plain(power(k), c) for k, c in enumerate(coeffs) if k >= 1 and c != 0]
    if not terms:
        return add_plain(mul_plain(ct, 0), coeffs[0])
    acc = _balanced_sum(terms)
    if coeffs[0]:
        acc = add_plain(acc, coeffs[0])
    return acc


def eval_poly_many(
    cts: Sequence[Ciphertext], coeffs: Sequence[int], evk: EvalKey
) -> list[Ciphertext]:
    """eval_poly_ct over many ciphertexts, sharing the expensive transforms.

    The rlwe backend batches every ct*ct product in the power tree across the
    whole list; the simulator is already vectorized per call.
    """
    cts = list(cts)
    if not cts:
        return []
    params = cts[0].params
    p = params.p
    coeffs = [int(c) % p for c in coeffs]
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    degree = len(coeffs) - 1
    if params.backend == SIMULATOR or degree < 2:
        return [eval_poly_ct(ct, coeffs, evk) for ct in cts]
    level = min(ct.level for ct in cts)
    if poly_depth(degree) > level:
        raise LevelExhaustedError(
            f"degree {degree} needs depth {poly_depth(degree)}, level is {level}"
        )
    ctx = _rlwe.context_for(params)
    powers: dict[int, list[Ciphertext]] = {1: cts}

    def power(k: int) -> list[Ciphertext]:
        if k not in powers:
            hi, lo = -(-k // 2), k // 2
            a, b = power(hi), power(lo)
            impls = ctx.mul_many([c.impl for c in a], [c.impl for c in b], evk.impl)
            powers[k] = [Ciphertext(params, impl) for impl in impls]
        return powers[k]

    needed = [k for k, c in enumerate(coeffs) if k >= 1 and c != 0]
    for k in needed:
        power(k)
    out = []
    for i, ct in enumerate(cts):
        terms = [mul_plain(powers[k][i], coeffs[k]) for k in needed]
        if not terms:
            acc = add_plain(mul_plain(ct, 0), coeffs[0])
        else:
            acc = _balanced_sum(terms)
            if coeffs[0]:
                acc = add_plain(acc, coeffs[0])
        out.append(acc)
    return out


def _balanced_sum(terms: list[Ciphertext]) -> Ciphertext:
    while len(terms) > 1:
        nxt = [add(terms[i], terms[i + 1]) for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def linear_combine(
    cts: Sequence[Ciphertext],
    weights: np.ndarray,
    bias: np.ndarray | None = None,
) -> list[Ciphertext]:
    """rows of `weights` (signed ints) times the ciphertext vector, plus bias.

    Semantically a tree of mul_plain/add per row; the simulator executes it as
    one packed matrix product with the equivalent balanced-tree noise charge.
    """
    if not cts:
        raise ValueError("linear_combine needs at least one ciphertext")
    params = cts[0].params
    weights = np.asarray(weights, dtype=np.int64)
    if weights.shape[1] != len(cts):
        raise ValueError("weight columns must match ciphertext count")
    if bias is not None:
        bias = np.asarray(bias, dtype=np.int64) % params.p
    if params.backend == SIMULATOR:
        return _linear_combine_sim(cts, weights, bias, params)
    out = []
    for r in range(weights.shape[0]):
        terms = [
            mul_plain(cts[j], int(w)) if abs(int(w)) != 1 else
            (cts[j] if int(w) == 1 else mul_plain(cts[j], -1))
            for j, w in enumerate(weights[r])
            if int(w) != 0
        ]
        if terms:
            acc = _balanced_sum(terms)
        else:
            acc = mul_plain(cts[0], 0)
        if bias is not None and int(bias[r]):
            acc = add_plain(acc, int(bias[r]))
        out.append(acc)
    return out


def _linear_combine_sim(cts, weights, bias, params: HEParams) -> list[Ciphertext]:
    weights = centered(weights % params.p, params.p)  # keep magnitudes small
    matrix = np.stack([c.impl.slots for c in cts])  # (in, slots)
    level = min(c.impl.level for c in cts)
    in_budget = min(c.impl.noise_budget for c in cts)
    result = modmatmul(weights, matrix, params.p)
    if bias is not None:
        result = (result + bias[:, None]) % params.p
    out = []
    for r in range(weights.shape[0]):
        nnz = int(np.count_nonzero(weights[r]))
        needs_mul = bool(np.any(np.abs(weights[r]) > 1))
        charge = _sim.linear_charge(params, max(nnz, 1), needs_mul)
        if bias is not None and int(bias[r]):
            charge += params.noise.add_cost
        out.append(
            Ciphertext(
                params,
                _sim.SimCiphertext(
                    slots=result[r],
                    level=level,
                    noise_budget=in_budget - charge,
                    key_id=cts[0].impl.key_id,
                    nonce=secrets.token_bytes(16),
                ),
            )
        )
    return out
