"""Add/mul-only CNN forward pass over plaintext integers or ciphertexts.

Layers carry quantized signed-integer weights.  The plaintext engine works on
residue tensors with a trailing batch axis; the encrypted engine keeps one
ciphertext per tensor element (batch across slots).  On the simulator backend
the whole tensor is packed into one slot matrix so layers execute as a single
modular matrix product with the equivalent balanced-tree noise charge.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from math import ceil, log2
from typing import Sequence

import numpy as np

from . import he
from ._modmath import centered, horner_mod, modmatmul
from .he import api as _he_api
from .he import simulator as _sim
from .he.params import SIMULATOR


class ShapeError(ValueError):
    pass


class InferenceError(RuntimeError):
    """Inference cannot proceed; .layer names the culprit when known.

    kind is "capacity" (depth or magnitude pre-check) or "noise" (budget
    exhausted mid-circuit); callers map these to distinct exit codes.
    """

    def __init__(self, message: str, layer: str | None = None, kind: str = "capacity"):
        super().__init__(message)
        self.layer = layer
        self.kind = kind


# ---------------------------------------------------------------------------
# Layer and model types (weights are signed int64; reduced mod p at use)


@dataclass(frozen=True)
class Conv2d:
    weights: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    scale: float = 1.0  # output scale of this layer's values

    def __post_init__(self):
        if self.weights.ndim != 4 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("conv weights must be (out,in,kh,kw) with matching bias")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")


@dataclass(frozen=True)
class AvgPoolScaled:
    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ShapeError("pool window must be >= 1")


@dataclass(frozen=True)
class PolyActivation:
    coeffs: tuple  # ascending-degree signed integers
    scale_in: float = 1.0
    scale_out: float = 1.0


@dataclass(frozen=True)
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError("dense weights must be (out,in) with matching bias")


@dataclass(frozen=True)
class Flatten:
    pass


Layer = object  # any of the above


@dataclass
class ModelSpec:
    layers: list
    input_shape: tuple  # (C, H, W) or (features,)
    class_count: int
    p: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        shapes = self.layer_shapes()
        if shapes[-1] != (self.class_count,):
            raise ShapeError(
                f"model produces {shapes[-1]}, expected ({self.class_count},) logits"
            )

    def layer_shapes(self) -> list[tuple]:
        """Shape after the input and after every layer; raises on mismatch."""
        shapes = [self.input_shape]
        cur = self.input_shape
        for idx, layer in enumerate(self.layers):
            cur = output_shape(layer, cur, name=layer_name(layer, idx))
            shapes.append(cur)
        return shapes


def layer_name(layer, idx: int) -> str:
    return f"{idx}:{type(layer).__name__}"


def output_shape(layer, shape: tuple, name: str = "?") -> tuple:
    if isinstance(layer, Conv2d):
        if len(shape) != 3:
            raise ShapeError(f"{name}: conv input must be (C,H,W), got {shape}")
        c, h, w = shape
        out, cin, kh, kw = layer.weights.shape
        if cin != c:
            raise ShapeError(f"{name}: expects {cin} channels, input has {c}")
        if kh > h or kw > w:
            raise ShapeError(f"{name}: kernel {kh}x{kw} larger than input {h}x{w}")
        s = layer.stride
        return (out, (h - kh) // s + 1, (w - kw) // s + 1)
    if isinstance(layer, AvgPoolScaled):
        if len(shape) != 3:
            raise ShapeError(f"{name}: pool input must be (C,H,W), got {shape}")
        c, h, w = shape
        if layer.window > h or layer.window > w:
            raise ShapeError(f"{name}: window {layer.window} larger than input {h}x{w}")
        return (c, h // layer.window, w // layer.window)
    if isinstance(layer, PolyActivation):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ShapeError(f"{name}: dense input must be flat, got {shape}")
        out, cin = layer.weights.shape
        if cin != shape[0]:
            raise ShapeError(f"{name}: expects {cin} features, input has {shape[0]}")
        return (out,)
    raise ShapeError(f"{name}: unknown layer type {type(layer).__name__}")


# ---------------------------------------------------------------------------
# Depth accounting


@dataclass
class DepthReport:
    ct_mul_depth: int
    plain_mult_count: int
    per_layer: list  # (name, depth, plain mults)
    minimal_L: int
    recommended_L: int

    def to_json(self) -> dict:
        return {
            "ct_mul_depth": self.ct_mul_depth,
            "plain_mult_count": self.plain_mult_count,
            "per_layer": [
                {"layer": n, "ct_mul_depth": d, "plain_mults": m}
                for n, d, m in self.per_layer
            ],
            "minimal_L": self.minimal_L,
            "recommended_L": self.recommended_L,
        }


def depth_report(model: ModelSpec) -> DepthReport:
    per_layer = []
    total_depth = 0
    total_plain = 0
    shapes = model.layer_shapes()
    for idx, layer in enumerate(model.layers):
        name = layer_name(layer, idx)
        depth = 0
        plain = 0
        out_shape = shapes[idx + 1]
        if isinstance(layer, PolyActivation):
            degree = len(layer.coeffs) - 1
            depth = he.poly_depth(degree) if degree >= 2 else 0
            plain = int(np.prod(out_shape)) * max(degree, 0)
        elif isinstance(layer, Conv2d):
            plain = int(np.prod(out_shape)) * int(np.prod(layer.weights.shape[1:]))
        elif isinstance(layer, Dense):
            plain = int(np.prod(layer.weights.shape))
        per_layer.append((name, depth, plain))
        total_depth += depth
        total_plain += plain
    return DepthReport(
        ct_mul_depth=total_depth,
        plain_mult_count=total_plain,
        per_layer=per_layer,
        minimal_L=total_depth,
        recommended_L=total_depth + 2,
    )


# ---------------------------------------------------------------------------
# Plaintext engine: values are residues in [0,p), trailing batch axis


@dataclass
class PlainTensor:
    shape: tuple
    values: np.ndarray  # shape + (batch,), int64 residues in [0, p)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.values.shape[:-1] != self.shape:
            raise ShapeError(
                f"values shape {self.values.shape[:-1]} != declared {self.shape}"
            )

    @property
    def batch(self) -> int:
        return self.values.shape[-1]


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(C,H,W,B) -> (C*kh*kw, OH*OW*B) patch matrix."""
    c, h, w, b = x.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, OH, OW, B, kh, kw)
    oh, ow = win.shape[1], win.shape[2]
    patches = win.transpose(0, 4, 5, 1, 2, 3).reshape(c * kh * kw, oh * ow * b)
    return np.ascontiguousarray(patches), oh, ow


_CONV_CHUNK_ELEMS = 30_000_000  # cap on patch-matrix size to bound memory


def _conv_plain(x: np.ndarray, layer: Conv2d, p: int) -> np.ndarray:
    out_ch, cin, kh, kw = layer.weights.shape
    b = x.shape[-1]
    # signed reading keeps weight magnitudes small for the fast matmul paths
    w2 = centered(layer.weights.reshape(out_ch, cin * kh * kw) % p, p)
    s = layer.stride
    oh = (x.shape[1] - kh) // s + 1
    ow = (x.shape[2] - kw) // s + 1
    per_item = cin * kh * kw * oh * ow
    chunk = max(1, _CONV_CHUNK_ELEMS // max(per_item, 1))
    out = np.empty((out_ch, oh, ow, b), dtype=np.int64)
    for start in range(0, b, chunk):
        part = x[..., start : start + chunk]
        patches, _, _ = _im2col(part, kh, kw, s)
        out[..., start : start + chunk] = modmatmul(w2, patches, p).reshape(
            out_ch, oh, ow, part.shape[-1]
        )
    return (out + (layer.bias % p)[:, None, None, None]) % p


def _pool_plain(x: np.ndarray, window: int, p: int) -> np.ndarray:
    c, h, w, b = x.shape
    oh, ow = h // window, w // window
    v = x[:, : oh * window, : ow * window].reshape(c, oh, window, ow, window, b)
    return v.sum(axis=(2, 4)) % p


def _dense_plain(x: np.ndarray, layer: Dense, p: int) -> np.ndarray:
    res = modmatmul(centered(layer.weights % p, p), x, p)
    return (res + (layer.bias % p)[:, None]) % p


def _poly_plain(x: np.ndarray, coeffs, p: int) -> np.ndarray:
    return horner_mod([int(c) % p for c in coeffs], x, p)


def apply_layer_plain(x: np.ndarray, layer, p: int) -> np.ndarray:
    if isinstance(layer, Conv2d):
        return _conv_plain(x, layer, p)
    if isinstance(layer, AvgPoolScaled):
        return _pool_plain(x, layer.window, p)
    if isinstance(layer, PolyActivation):
        return _poly_plain(x, layer.coeffs, p)
    if isinstance(layer, Flatten):
        b = x.shape[-1]
        return np.ascontiguousarray(x.reshape(-1, b))
    if isinstance(layer, Dense):
        return _dense_plain(x, layer, p)
    raise ShapeError(f"unknown layer {type(layer).__name__}")


def infer_plain(model: ModelSpec, batch: np.ndarray) -> np.ndarray:
    """batch: (B,) + input_shape residues in [0,p).  Returns (B, classes)."""
    p = model.p
    x = np.asarray(batch, dtype=np.int64)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} != model {model.input_shape}")
    x = np.moveaxis(x, 0, -1)  # batch last
    for layer in model.layers:
        x = apply_layer_plain(x, layer, p)
    return np.ascontiguousarray(np.moveaxis(x, -1, 0))


# ---------------------------------------------------------------------------
# Encrypted engine


@dataclass
class CipherTensor:
    shape: tuple
    cts: list  # he.Ciphertext per element, C-order flattening of shape

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if len(self.cts) != int(np.prod(self.shape)):
            raise ShapeError("ciphertext count does not match tensor shape")


def encrypt_tensor(
    pk: he.PublicKey, batch: np.ndarray, rng: np.random.Generator | None = None
) -> CipherTensor:
    """batch (B,)+shape residues -> one ciphertext per element, batch in slots."""
    x = np.asarray(batch, dtype=np.int64)
    shape = x.shape[1:]
    flat = np.moveaxis(x, 0, -1).reshape(-1, x.shape[0])
    cts = [he.encrypt(pk, row, rng=rng) for row in flat]
    return CipherTensor(shape=shape, cts=cts)


def decrypt_tensor(sk: he.SecretKey, tensor: CipherTensor, batch: int) -> np.ndarray:
    rows = [he.decrypt(sk, ct)[:batch] for ct in tensor.cts]
    flat = np.stack(rows)  # (elements, batch)
    return np.moveaxis(flat.reshape(tensor.shape + (batch,)), -1, 0)


def _linear_cipher(cts: list, weights: np.ndarray, bias, params) -> list:
    """weights (rows, len(cts)) signed ints; returns one ciphertext per row."""
    if params.backend == SIMULATOR:
        return _he_api._linear_combine_sim(
            cts, weights, None if bias is None else np.asarray(bias) % params.p, params
        )
    return _linear_cipher_rlwe(cts, weights, bias, params)


def _linear_cipher_rlwe(cts: list, weights: np.ndarray, bias, params) -> list:
    from .he import rlwe as _rlwe

    ctx = _rlwe.context_for(params)
    primes = ctx.q_primes
    weights = centered(weights % params.p, params.p)  # signed, small magnitudes
    comp = [
        np.stack([ct.impl.components[j] for ct in cts]) for j in range(2)
    ]  # (m, num_primes, n) each
    level = min(ct.level for ct in cts)
    rows = weights.shape[0]
    out_comp = [np.empty((rows, len(primes), params.n), dtype=np.int64) for _ in range(2)]
    for j in range(2):
        for i, q in enumerate(primes):
            out_comp[j][:, i, :] = modmatmul(weights, comp[j][:, i, :], q)
    max_in = max(ct.impl.noise_bits for ct in cts)
    abs_w = np.abs(weights).sum(axis=1)
    out = []
    for r in range(rows):
        growth = log2(max(int(abs_w[r]), 1))
        noise = _rlwe._log2_sum(max_in + growth, log2(params.p) + growth)
        impl = _rlwe.RlweCiphertext(
            components=[out_comp[0][r], out_comp[1][r]],
            level=level,
            noise_bits=noise,
            key_id=cts[0].impl.key_id,
        )
        ct = he.Ciphertext(params, impl)
        if bias is not None and int(bias[r]) % params.p:
            ct = he.add_plain(ct, int(bias[r]) % params.p)
        out.append(ct)
    return out


def _conv_weight_matrix(layer: Conv2d, shape: tuple) -> tuple[np.ndarray, tuple]:
    """Dense scatter matrix mapping flattened input pixels to output pixels."""
    c, h, w = shape
    out_ch, cin, kh, kw = layer.weights.shape
    s = layer.stride
    oh, ow = (h - kh) // s + 1, (w - kw) // s + 1
    mat = np.zeros((out_ch * oh * ow, c * h * w), dtype=np.int64)
    idx = np.arange(c * h * w).reshape(c, h, w)
    for o in range(out_ch):
        for i in range(oh):
            for j in range(ow):
                row = (o * oh + i) * ow + j
                cols = idx[:, i * s : i * s + kh, j * s : j * s + kw].ravel()
                mat[row, cols] = layer.weights[o].ravel()
    return mat, (out_ch, oh, ow)


def _pool_weight_matrix(window: int, shape: tuple) -> tuple[np.ndarray, tuple]:
    c, h, w = shape
    oh, ow = h // window, w // window
    mat = np.zeros((c * oh * ow, c * h * w), dtype=np.int64)
    idx = np.arange(c * h * w).reshape(c, h, w)
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                row = (ch * oh + i) * ow + j
                cols = idx[
                    ch, i * window : (i + 1) * window, j * window : (j + 1) * window
                ].ravel()
                mat[row, cols] = 1
    return mat, (c, oh, ow)


def apply_layer_cipher(tensor: CipherTensor, layer, params, evk: he.EvalKey) -> CipherTensor:
    if isinstance(layer, Conv2d):
        mat, out_shape = _conv_weight_matrix(layer, tensor.shape)
        bias = np.repeat(layer.bias, int(np.prod(out_shape[1:])))
        return CipherTensor(out_shape, _linear_cipher(tensor.cts, mat, bias, params))
    if isinstance(layer, AvgPoolScaled):
        mat, out_shape = _pool_weight_matrix(layer.window, tensor.shape)
        return CipherTensor(out_shape, _linear_cipher(tensor.cts, mat, None, params))
    if isinstance(layer, Flatten):
        return CipherTensor((int(np.prod(tensor.shape)),), tensor.cts)
    if isinstance(layer, Dense):
        return CipherTensor(
            (layer.weights.shape[0],),
            _linear_cipher(tensor.cts, layer.weights, layer.bias, params),
        )
    if isinstance(layer, PolyActivation):
        coeffs = [int(c) % params.p for c in layer.coeffs]
        if params.backend == SIMULATOR:
            return _poly_cipher_sim(tensor, coeffs, params, evk)
        return CipherTensor(tensor.shape, he.eval_poly_many(tensor.cts, coeffs, evk))
    raise ShapeError(f"unknown layer {type(layer).__name__}")


def _poly_cipher_sim(tensor: CipherTensor, coeffs, params, evk) -> CipherTensor:
    """Pack the whole tensor into one slot matrix; the simulator's elementwise
    ops broadcast over it, so one eval_poly_ct call covers every element."""
    packed = _sim.SimCiphertext(
        slots=np.stack([ct.impl.slots for ct in tensor.cts]),
        level=min(ct.level for ct in tensor.cts),
        noise_budget=min(ct.impl.noise_budget for ct in tensor.cts),
        key_id=tensor.cts[0].impl.key_id,
        nonce=b"\x00" * 16,
    )
    result = he.eval_poly_ct(he.Ciphertext(params, packed), coeffs, evk)
    out = [
        he.Ciphertext(
            params,
            _sim.SimCiphertext(
                slots=result.impl.slots[i],
                level=result.impl.level,
                noise_budget=result.impl.noise_budget,
                key_id=packed.key_id,
                nonce=_sim._fresh_nonce(),
            ),
        )
        for i in range(len(tensor.cts))
    ]
    return CipherTensor(tensor.shape, out)


def _infer_encrypted_sim(
    model: ModelSpec, tensor: CipherTensor, params, evk, timings: list | None = None
) -> list:
    """Simulator fast path: the whole tensor rides in one slot matrix so each
    layer is a single modular matrix product; noise is charged per layer with
    the balanced-tree model (worst-case terms per output element)."""
    p = params.p
    x = np.stack([ct.impl.slots for ct in tensor.cts]).reshape(
        tensor.shape + (params.slot_count,)
    )
    level = min(ct.level for ct in tensor.cts)
    budget = min(ct.impl.noise_budget for ct in tensor.cts)
    key_id = tensor.cts[0].impl.key_id
    noise = params.noise
    for idx, layer in enumerate(model.layers):
        name = layer_name(layer, idx)
        t_layer = time.perf_counter()
        if isinstance(layer, Conv2d):
            x = _conv_plain(x, layer, p)
            n_terms = int(np.prod(layer.weights.shape[1:]))
            budget -= _sim.linear_charge(params, n_terms, True) + noise.add_cost
        elif isinstance(layer, AvgPoolScaled):
            x = _pool_plain(x, layer.window, p)
            budget -= _sim.linear_charge(params, layer.window**2, False)
        elif isinstance(layer, Flatten):
            x = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
        elif isinstance(layer, Dense):
            x = _dense_plain(x, layer, p)
            budget -= _sim.linear_charge(params, layer.weights.shape[1], True)
            budget += -noise.add_cost
        elif isinstance(layer, PolyActivation):
            packed = _sim.SimCiphertext(
                slots=x.reshape(-1, params.slot_count),
                level=level,
                noise_budget=budget,
                key_id=key_id,
                nonce=b"\x00" * 16,
            )
            coeffs = [int(c) % p for c in layer.coeffs]
            result = he.eval_poly_ct(he.Ciphertext(params, packed), coeffs, evk)
            x = result.impl.slots.reshape(x.shape)
            level = result.impl.level
            budget = result.impl.noise_budget
        else:
            raise ShapeError(f"unknown layer {type(layer).__name__}")
        if timings is not None:
            timings.append((name, time.perf_counter() - t_layer))
        if budget <= 0:
            raise InferenceError(
                f"{name}: noise budget exhausted ({budget:.1f} bits)",
                layer=name,
                kind="noise",
            )
    flat = x.reshape(-1, params.slot_count)
    # result nonces are derived, not random: the same inputs and keys must
    # yield byte-identical result ciphertexts whichever pipeline ran them
    trace = hashlib.sha256(key_id + b"".join(ct.impl.nonce for ct in tensor.cts))
    return [
        he.Ciphertext(
            params,
            _sim.SimCiphertext(
                slots=flat[i],
                level=level,
                noise_budget=budget,
                key_id=key_id,
                nonce=hashlib.sha256(trace.digest() + i.to_bytes(4, "little")).digest()[:16],
            ),
        )
        for i in range(flat.shape[0])
    ]


def infer_encrypted(
    model: ModelSpec,
    tensor: CipherTensor,
    params,
    evk: he.EvalKey,
    check_capacity: bool = True,
    input_range: tuple[float, float] | None = None,
    timings: list | None = None,
) -> list:
    """Returns one ciphertext per class logit (batch across slots)."""
    if tensor.shape != model.input_shape:
        raise ShapeError(f"input shape {tensor.shape} != model {model.input_shape}")
    report = depth_report(model)
    if report.minimal_L > params.L:
        raise InferenceError(
            f"model needs depth {report.minimal_L} but params allow L={params.L}",
            layer=next((n for n, d, _ in report.per_layer if d), None),
        )
    if check_capacity:
        from .quantize import capacity_check

        rng = input_range if input_range is not None else (0.0, float(params.p // 2))
        cap = capacity_check(model, rng, params.p)
        if not cap.passed:
            raise InferenceError(
                f"capacity check failed at {cap.failing_layer}: "
                f"bound {cap.worst_bound:.3g} >= p/2",
                layer=cap.failing_layer,
            )
    if params.backend == SIMULATOR:
        try:
            return _infer_encrypted_sim(model, tensor, params, evk, timings=timings)
        except he.LevelExhaustedError as exc:
            raise InferenceError(str(exc)) from exc
        except he.NoiseExhaustedError as exc:
            raise InferenceError(str(exc), kind="noise") from exc
    cur = tensor
    for idx, layer in enumerate(model.layers):
        name = layer_name(layer, idx)
        t_layer = time.perf_counter()
        try:
            cur = apply_layer_cipher(cur, layer, params, evk)
        except he.LevelExhaustedError as exc:
            raise InferenceError(f"{name}: {exc}", layer=name) from exc
        except he.NoiseExhaustedError as exc:
            raise InferenceError(f"{name}: {exc}", layer=name, kind="noise") from exc
        if timings is not None:
            timings.append((name, time.perf_counter() - t_layer))
        budget = min(ct.noise_budget for ct in cur.cts)
        if budget <= 0:
            raise InferenceError(
                f"{name}: noise budget exhausted ({budget:.1f} bits)",
                layer=name,
                kind="noise",
            )
    return cur.cts


def infer(
    model: ModelSpec,
    batch: np.ndarray,
    *,
    params=None,
    keys: he.KeySet | None = None,
    encrypted: bool = False,
    input_range: tuple[float, float] | None = None,
) -> np.ndarray:
    """Front door: plaintext logits, or encrypt->evaluate->decrypt round trip."""
    if not encrypted:
        return infer_plain(model, batch)
    if params is None or keys is None:
        raise ValueError("encrypted inference needs params and keys")
    tensor = encrypt_tensor(keys.public, np.asarray(batch, dtype=np.int64))
    logits_ct = infer_encrypted(
        model, tensor, params, keys.evaluation, input_range=input_range
    )
    rows = [he.decrypt(keys.secret, ct)[: len(batch)] for ct in logits_ct]
    return np.stack(rows, axis=1)


def predict(logits: np.ndarray, p: int) -> np.ndarray:
    """Argmax over the signed reading of residue logits; ties -> lowest index."""
    signed = centered(np.asarray(logits, dtype=np.int64), p)
    return np.argmax(signed, axis=-1)
