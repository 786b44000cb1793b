"""Leveled homomorphic encryption with two interchangeable backends."""

from .api import (
    Ciphertext,
    EvalKey,
    KeySet,
    PublicKey,
    SecretKey,
    add,
    add_plain,
    decrypt,
    encrypt,
    eval_poly_ct,
    eval_poly_many,
    keygen,
    linear_combine,
    measured_noise_budget,
    mul,
    mul_plain,
    noise_budget,
    poly_depth,
    rotate,
)
from .errors import (
    BackendMismatchError,
    HeError,
    KeyMismatchError,
    LevelExhaustedError,
    NoiseExhaustedError,
    ParamError,
)
from .params import RLWE, SIMULATOR, HEParams, NoiseModel
from .rlwe import required_q_bits
from .wire import deserialize_ct, deserialize_keys, serialize_ct, serialize_keys

__all__ = [
    "Ciphertext",
    "EvalKey",
    "KeySet",
    "PublicKey",
    "SecretKey",
    "HEParams",
    "NoiseModel",
    "SIMULATOR",
    "RLWE",
    "keygen",
    "encrypt",
    "decrypt",
    "add",
    "add_plain",
    "mul",
    "mul_plain",
    "rotate",
    "eval_poly_ct",
    "eval_poly_many",
    "poly_depth",
    "linear_combine",
    "noise_budget",
    "measured_noise_budget",
    "required_q_bits",
    "serialize_ct",
    "deserialize_ct",
    "serialize_keys",
    "deserialize_keys",
    "HeError",
    "ParamError",
    "BackendMismatchError",
    "LevelExhaustedError",
    "NoiseExhaustedError",
    "KeyMismatchError",
]
