"""Binary serialization for ciphertexts and key material.

Ciphertext layout (little-endian unless noted):

    magic  "CDL1"  (4 bytes)
    u8     backend id (0 = simulator, 1 = rlwe)
    u16    format version (currently 1)
    u32    level
    f64    backend noise figure (simulator: remaining budget bits;
           rlwe: log2 of the absolute noise bound)
    u32    component count
    per component: u32 word count, then that many u64 words

Key files use magic "CDLK", a JSON header (params + which parts are present
+ component names/shapes), then the same component framing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import api
from . import rlwe as _rlwe
from . import simulator as _sim
from .errors import HeError, ParamError
from .params import RLWE, SIMULATOR, HEParams

CT_MAGIC = b"CDL1"
KEY_MAGIC = b"CDLK"
VERSION = 1
_BACKEND_IDS = {SIMULATOR: 0, RLWE: 1}
_BACKEND_NAMES = {v: k for k, v in _BACKEND_IDS.items()}


def _bytes_to_words(raw: bytes) -> np.ndarray:
    padded = raw + b"\x00" * (-len(raw) % 8)
    return np.frombuffer(padded, dtype="<u8").copy()


def _words_to_bytes(words: np.ndarray, length: int) -> bytes:
    return words.astype("<u8").tobytes()[:length]


def _pack_component(values: np.ndarray) -> bytes:
    words = np.ascontiguousarray(values.reshape(-1), dtype=np.int64).astype("<u8")
    return struct.pack("<I", words.size) + words.tobytes()


def _pack_raw_component(words: np.ndarray) -> bytes:
    words = np.ascontiguousarray(words, dtype="<u8")
    return struct.pack("<I", words.size) + words.tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise HeError("truncated serialized object")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def component(self) -> np.ndarray:
        count = self.u32()
        if count > (len(self.data) - self.pos) // 8:
            raise HeError("component length exceeds available data")
        return np.frombuffer(self.take(count * 8), dtype="<u8").copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise HeError(f"{len(self.data) - self.pos} trailing bytes after object")


def serialize_ct(ct: api.Ciphertext) -> bytes:
    params = ct.params
    impl = ct.impl
    if params.backend == SIMULATOR:
        noise = impl.noise_budget
        components = [
            _pack_component(impl.slots),
            _pack_raw_component(_bytes_to_words(impl.key_id)),
            _pack_raw_component(_bytes_to_words(impl.nonce)),
        ]
    else:
        noise = impl.noise_bits
        components = [_pack_component(c) for c in impl.components]
        components.append(_pack_raw_component(_bytes_to_words(impl.key_id)))
    head = CT_MAGIC + struct.pack(
        "<BHId", _BACKEND_IDS[params.backend], VERSION, impl.level, noise
    )
    return head + struct.pack("<I", len(components)) + b"".join(components)


def deserialize_ct(data: bytes, params: HEParams) -> api.Ciphertext:
    r = _Reader(data)
    if r.take(4) != CT_MAGIC:
        raise HeError("bad ciphertext magic")
    backend_id = r.u8()
    if _BACKEND_NAMES.get(backend_id) != params.backend:
        raise ParamError(
            f"ciphertext backend id {backend_id} does not match params backend "
            f"{params.backend!r}"
        )
    version = r.u16()
    if version != VERSION:
        raise HeError(f"unsupported ciphertext format version {version}")
    level = r.u32()
    if level > params.L:
        raise HeError(f"ciphertext level {level} exceeds parameter L={params.L}")
    noise = r.f64()
    count = r.u32()
    components = [r.component() for _ in range(count)]
    r.done()
    if params.backend == SIMULATOR:
        if count != 3:
            raise HeError(f"simulator ciphertext needs 3 components, got {count}")
        slots = components[0].astype(np.int64)
        if slots.size != params.slot_count:
            raise HeError("slot count does not match parameters")
        if slots.size and (slots.min() < 0 or int(slots.max()) >= params.p):
            raise HeError("slot residues out of range for plaintext modulus")
        impl = _sim.SimCiphertext(
            slots=slots,
            level=level,
            noise_budget=noise,
            key_id=_words_to_bytes(components[1], 16),
            nonce=_words_to_bytes(components[2], 16),
        )
        return api.Ciphertext(params, impl)
    ctx = _rlwe.context_for(params)
    n_primes = len(ctx.q_primes)
    polys = components[:-1]
    if len(polys) < 2:
        raise HeError("rlwe ciphertext needs at least 2 polynomial components")
    shaped = []
    for comp in polys:
        if comp.size != n_primes * params.n:
            raise HeError("rlwe component size does not match ring parameters")
        arr = comp.astype(np.int64).reshape(n_primes, params.n)
        if (arr < 0).any() or (arr >= np.array(ctx.q_primes)[:, None]).any():
            raise HeError("rlwe residues out of range for modulus chain")
        shaped.append(arr)
    impl = _rlwe.RlweCiphertext(
        components=shaped,
        level=level,
        noise_bits=noise,
        key_id=_words_to_bytes(components[-1], 16),
    )
    return api.Ciphertext(params, impl)


# ---------------------------------------------------------------------------
# Keys


def serialize_keys(keys: api.KeySet, parts: tuple[str, ...] = ("secret", "public", "evaluation")) -> bytes:
    params = keys.params
    named: list[tuple[str, np.ndarray, bool]] = []  # (name, words, raw)
    if params.backend == SIMULATOR:
        if "secret" in parts:
            named.append(("material", _bytes_to_words(keys.secret.impl.material), True))
        named.append(("key_id", _bytes_to_words(keys.key_id), True))
    else:
        if "secret" in parts:
            # ternary coefficients stored with +1 offset so they fit unsigned words
            named.append(("s", (keys.secret.impl.s + 1).astype(np.int64), False))
        if "public" in parts:
            named.append(("pk_a", keys.public.impl.a, False))
            named.append(("pk_b", keys.public.impl.b, False))
        if "evaluation" in parts:
            named.append(("evk_a", keys.evaluation.impl.a_hat, False))
            named.append(("evk_b", keys.evaluation.impl.b_hat, False))
        named.append(("key_id", _bytes_to_words(keys.key_id), True))
    header = {
        "params": params.to_json(),
        "parts": list(parts),
        "components": [
            {"name": name, "shape": [] if raw else list(np.asarray(arr).shape)}
            for name, arr, raw in named
        ],
    }
    header_bytes = json.dumps(header).encode()
    body = b"".join(
        _pack_raw_component(arr) if raw else _pack_component(np.asarray(arr))
        for _, arr, raw in named
    )
    return (
        KEY_MAGIC
        + struct.pack("<HI", VERSION, len(header_bytes))
        + header_bytes
        + struct.pack("<I", len(named))
        + body
    )


def deserialize_keys(data: bytes) -> api.KeySet:
    """Rebuild a key set; missing parts come back as None fields."""
    r = _Reader(data)
    if r.take(4) != KEY_MAGIC:
        raise HeError("bad key file magic")
    version = r.u16()
    if version != VERSION:
        raise HeError(f"unsupported key format version {version}")
    header = json.loads(r.take(r.u32()).decode())
    params = HEParams.from_json(header["params"])
    count = r.u32()
    if count != len(header["components"]):
        raise HeError("key component count mismatch")
    comps: dict[str, np.ndarray] = {}
    for meta in header["components"]:
        words = r.component()
        shape = meta["shape"]
        comps[meta["name"]] = words.astype(np.int64).reshape(shape) if shape else words
    r.done()
    if "key_id" not in comps:
        raise HeError("key file is missing its key id")
    key_id = _words_to_bytes(comps["key_id"], 16)
    parts = set(header["parts"])
    if params.backend == SIMULATOR:
        secret = None
        if "secret" in parts:
            secret = _sim.SimSecretKey(
                key_id=key_id, material=_words_to_bytes(comps["material"], 32)
            )
        impl_set = _sim.SimKeySet(
            secret=secret,
            public=_sim.SimPublicKey(key_id=key_id),
            evaluation=_sim.SimEvalKey(key_id=key_id),
        )
    else:
        secret = public = evaluation = None
        if "secret" in parts:
            secret = _rlwe.RlweSecretKey(s=comps["s"] - 1, key_id=key_id)
        if "public" in parts:
            public = _rlwe.RlwePublicKey(a=comps["pk_a"], b=comps["pk_b"], key_id=key_id)
        if "evaluation" in parts:
            evaluation = _rlwe.RlweEvalKey(
                a_hat=comps["evk_a"], b_hat=comps["evk_b"], key_id=key_id
            )
        impl_set = _rlwe.RlweKeySet(secret=secret, public=public, evaluation=evaluation)
    return api.KeySet(
        params=params,
        secret=api.SecretKey(params, impl_set.secret) if impl_set.secret else None,
        public=api.PublicKey(params, impl_set.public) if impl_set.public else None,
        evaluation=api.EvalKey(params, impl_set.evaluation) if impl_set.evaluation else None,
    )
