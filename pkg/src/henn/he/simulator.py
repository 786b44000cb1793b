"""Exact noise-accounting simulator backend.

Slots hold the true plaintext residues; noise is a deterministic bit budget
charged per operation from the params' NoiseModel.  Decryption refuses once
the budget reaches zero, which makes level/noise failures reproducible in
tests while keeping every computed value exact.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from .._modmath import modmul_elements
from .errors import KeyMismatchError, NoiseExhaustedError, ParamError
from .params import HEParams


@dataclass
class SimCiphertext:
    slots: np.ndarray  # int64 residues in [0, p)
    level: int
    noise_budget: float
    key_id: bytes
    nonce: bytes  # freshness marker so equal plaintexts serialize differently


@dataclass
class SimSecretKey:
    key_id: bytes
    material: bytes


@dataclass
class SimPublicKey:
    key_id: bytes


@dataclass
class SimEvalKey:
    key_id: bytes


@dataclass
class SimKeySet:
    secret: SimSecretKey
    public: SimPublicKey
    evaluation: SimEvalKey

    @property
    def key_id(self) -> bytes:
        return self.secret.key_id


def keygen(params: HEParams, seed: bytes) -> SimKeySet:
    material = hashlib.sha256(b"sim-key" + seed).digest()
    key_id = hashlib.sha256(b"sim-key-id" + seed).digest()[:16]
    return SimKeySet(
        secret=SimSecretKey(key_id=key_id, material=material),
        public=SimPublicKey(key_id=key_id),
        evaluation=SimEvalKey(key_id=key_id),
    )


def encrypt(params: HEParams, pk: SimPublicKey, slots: np.ndarray) -> SimCiphertext:
    return SimCiphertext(
        slots=np.asarray(slots, dtype=np.int64).copy(),
        level=params.L,
        noise_budget=params.noise.fresh_budget(params.L),
        key_id=pk.key_id,
        nonce=secrets.token_bytes(16),
    )


def decrypt(params: HEParams, sk: SimSecretKey, ct: SimCiphertext) -> np.ndarray:
    if sk.key_id != ct.key_id:
        raise KeyMismatchError("ciphertext was produced under a different key set")
    if ct.noise_budget <= 0:
        raise NoiseExhaustedError(f"noise budget exhausted ({ct.noise_budget:.1f} bits)")
    return ct.slots.copy()


def _fresh_nonce() -> bytes:
    return secrets.token_bytes(16)


def add(params: HEParams, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
    return SimCiphertext(
        slots=(a.slots + b.slots) % params.p,
        level=min(a.level, b.level),
        noise_budget=min(a.noise_budget, b.noise_budget) - params.noise.add_cost,
        key_id=a.key_id,
        nonce=_fresh_nonce(),
    )


def add_plain(params: HEParams, ct: SimCiphertext, plain: np.ndarray) -> SimCiphertext:
    return SimCiphertext(
        slots=(ct.slots + plain) % params.p,
        level=ct.level,
        noise_budget=ct.noise_budget - params.noise.add_cost,
        key_id=ct.key_id,
        nonce=_fresh_nonce(),
    )


def mul(params: HEParams, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
    return SimCiphertext(
        slots=modmul_elements(a.slots, b.slots, params.p),
        level=min(a.level, b.level) - 1,
        noise_budget=min(a.noise_budget, b.noise_budget) - params.noise.ct_mul_cost,
        key_id=a.key_id,
        nonce=_fresh_nonce(),
    )


def mul_plain(params: HEParams, ct: SimCiphertext, plain) -> SimCiphertext:
    return SimCiphertext(
        slots=modmul_elements(ct.slots, plain, params.p),
        level=ct.level,
        noise_budget=ct.noise_budget - params.noise.mul_plain_cost,
        key_id=ct.key_id,
        nonce=_fresh_nonce(),
    )


def rotate(params: HEParams, ct: SimCiphertext, steps: int) -> SimCiphertext:
    return SimCiphertext(
        slots=np.roll(ct.slots, -steps),
        level=ct.level,
        noise_budget=ct.noise_budget - params.noise.rotate_cost,
        key_id=ct.key_id,
        nonce=_fresh_nonce(),
    )


def linear_charge(params: HEParams, n_terms: int, needs_mul: bool) -> float:
    """Budget cost of a balanced-tree weighted sum of n_terms ciphertexts."""
    cost = params.noise.mul_plain_cost if needs_mul else 0.0
    if n_terms > 1:
        cost += ceil(log2(n_terms)) * params.noise.add_cost
    return cost
