"""Model file format, MNIST IDX reader, fixtures, and the float oracle.

A model file is a JSON manifest plus an optional sibling binary blob of
little-endian f32 weights.  Weights are stored pre-quantization so one file
serves both the float reference forward pass and the integer engine; batch
normalization is stored unfolded and folded into the adjacent linear layer at
load time.

Manifest schema (format_version 1):

    {
      "format_version": 1,
      "input_shape": [C, H, W],
      "class_count": int,
      "quantization": {"p": int, "input_scale": float, "weight_scale": float,
                       "activation_coeff_scale": float},
      "blob_file": "name.bin",          # only if any tensor lives in the blob
      "layers": [
        {"type": "conv2d", "stride": s, "shape": [out,in,kh,kw],
         "weights": <tensor>, "bias": <tensor>, "batchnorm": {...}?},
        {"type": "avg_pool_scaled", "window": w},
        {"type": "poly_activation", "coeffs": [floats]},
        {"type": "flatten"},
        {"type": "dense", "shape": [out,in], "weights": <tensor>,
         "bias": <tensor>, "batchnorm": {...}?}
      ]
    }

A <tensor> is either an inline JSON number array (nested) or
{"blob": {"offset": byte offset, "length": element count}}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .approx.methods import relu_via_derivative
from .approx.measures import chebyshev_stretched
from .nn import AvgPoolScaled, Flatten, ModelSpec
from .quantize import (
    FloatConv2d,
    FloatDense,
    FloatModel,
    FloatPolyActivation,
    fold_model,
    quantize_model,
)

FORMAT_VERSION = 1
_INLINE_LIMIT = 64  # tensors with more elements go to the blob file


class ModelFormatError(ValueError):
    pass


@dataclass
class LoadedModel:
    float_model: FloatModel  # BN already folded
    model: ModelSpec | None  # quantized; None when manifest lacks quantization
    manifest: dict
    path: Path


# ---------------------------------------------------------------------------
# Saving


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def tensor(self, values: np.ndarray) -> dict | list:
        arr = np.asarray(values, dtype=np.float32)
        if arr.size <= _INLINE_LIMIT:
            return arr.tolist()
        raw = arr.astype("<f4").tobytes()
        ref = {"blob": {"offset": self.offset, "length": int(arr.size)}}
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref


def _bn_to_json(bn: dict | None) -> dict | None:
    if bn is None:
        return None
    return {k: (np.asarray(v).tolist() if k != "eps" else float(v)) for k, v in bn.items()}


def save_model(path, model: FloatModel, quantization: dict | None = None) -> Path:
    """Write manifest JSON at `path` (and `path.with_suffix('.bin')` if needed)."""
    path = Path(path)
    blob = _BlobWriter()
    layers = []
    for layer in model.layers:
        if isinstance(layer, FloatConv2d):
            entry = {
                "type": "conv2d",
                "stride": layer.stride,
                "shape": list(layer.weights.shape),
                "weights": blob.tensor(layer.weights),
                "bias": blob.tensor(layer.bias),
            }
            if layer.bn is not None:
                entry["batchnorm"] = _bn_to_json(layer.bn)
        elif isinstance(layer, FloatDense):
            entry = {
                "type": "dense",
                "shape": list(layer.weights.shape),
                "weights": blob.tensor(layer.weights),
                "bias": blob.tensor(layer.bias),
            }
            if layer.bn is not None:
                entry["batchnorm"] = _bn_to_json(layer.bn)
        elif isinstance(layer, AvgPoolScaled):
            entry = {"type": "avg_pool_scaled", "window": layer.window}
        elif isinstance(layer, FloatPolyActivation):
            entry = {"type": "poly_activation", "coeffs": [float(c) for c in layer.coeffs]}
        elif isinstance(layer, Flatten):
            entry = {"type": "flatten"}
        else:
            raise ModelFormatError(f"cannot serialize layer {type(layer).__name__}")
        layers.append(entry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "class_count": model.class_count,
        "layers": layers,
    }
    if quantization is not None:
        manifest["quantization"] = quantization
    if blob.chunks:
        blob_path = path.with_suffix(".bin")
        manifest["blob_file"] = blob_path.name
        blob_path.write_bytes(b"".join(blob.chunks))
    path.write_text(json.dumps(manifest, indent=1))
    return path


# ---------------------------------------------------------------------------
# Loading


def _read_tensor(spec, shape, blob: bytes | None, what: str) -> np.ndarray:
    expected = int(np.prod(shape))
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=np.float64)
        if arr.size != expected:
            raise ModelFormatError(f"{what}: inline tensor has {arr.size} values, expected {expected}")
        return arr.reshape(shape)
    if isinstance(spec, dict) and "blob" in spec:
        if blob is None:
            raise ModelFormatError(f"{what}: blob reference but no blob file declared")
        off, length = int(spec["blob"]["offset"]), int(spec["blob"]["length"])
        if length != expected:
            raise ModelFormatError(f"{what}: blob length {length} != expected {expected}")
        end = off + 4 * length
        if off < 0 or end > len(blob):
            raise ModelFormatError(f"{what}: blob reference [{off}:{end}] outside file of {len(blob)} bytes")
        return (
            np.frombuffer(blob[off:end], dtype="<f4").astype(np.float64).reshape(shape)
        )
    raise ModelFormatError(f"{what}: weights must be an inline array or a blob reference")


def _bn_from_json(obj: dict, channels: int, what: str) -> dict:
    out = {}
    for k in ("gamma", "beta", "mean", "var"):
        if k not in obj:
            raise ModelFormatError(f"{what}: batchnorm missing {k!r}")
        arr = np.asarray(obj[k], dtype=np.float64)
        if arr.shape != (channels,):
            raise ModelFormatError(f"{what}: batchnorm {k} must have {channels} entries")
        out[k] = arr
    if np.any(out["var"] < 0):
        raise ModelFormatError(f"{what}: negative batchnorm variance")
    out["eps"] = float(obj.get("eps", 1e-5))
    return out


def load_model(path, quantize: bool = True) -> LoadedModel:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {manifest.get('format_version')!r}")
    for key in ("input_shape", "class_count", "layers"):
        if key not in manifest:
            raise ModelFormatError(f"manifest missing {key!r}")
    blob = None
    if "blob_file" in manifest:
        blob_path = path.parent / manifest["blob_file"]
        if not blob_path.exists():
            raise ModelFormatError(f"blob file {blob_path} does not exist")
        blob = blob_path.read_bytes()
    layers: list = []
    for idx, entry in enumerate(manifest["layers"]):
        what = f"layer {idx} ({entry.get('type', '?')})"
        kind = entry.get("type")
        if kind == "conv2d":
            shape = tuple(entry["shape"])
            if len(shape) != 4:
                raise ModelFormatError(f"{what}: conv shape must have 4 dims")
            w = _read_tensor(entry["weights"], shape, blob, what)
            b = _read_tensor(entry["bias"], (shape[0],), blob, what)
            bn = _bn_from_json(entry["batchnorm"], shape[0], what) if "batchnorm" in entry else None
            layers.append(FloatConv2d(weights=w, bias=b, stride=int(entry.get("stride", 1)), bn=bn))
        elif kind == "dense":
            shape = tuple(entry["shape"])
            if len(shape) != 2:
                raise ModelFormatError(f"{what}: dense shape must have 2 dims")
            w = _read_tensor(entry["weights"], shape, blob, what)
            b = _read_tensor(entry["bias"], (shape[0],), blob, what)
            bn = _bn_from_json(entry["batchnorm"], shape[0], what) if "batchnorm" in entry else None
            layers.append(FloatDense(weights=w, bias=b, bn=bn))
        elif kind == "avg_pool_scaled":
            layers.append(AvgPoolScaled(int(entry["window"])))
        elif kind == "poly_activation":
            layers.append(FloatPolyActivation(tuple(float(c) for c in entry["coeffs"])))
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ModelFormatError(f"{what}: unknown layer type")
    float_model = fold_model(
        FloatModel(
            layers=tuple(layers),
            input_shape=tuple(manifest["input_shape"]),
            class_count=int(manifest["class_count"]),
        )
    )
    model = None
    if quantize and "quantization" in manifest:
        q = manifest["quantization"]
        model = quantize_model(
            float_model,
            p=int(q["p"]),
            input_scale=float(q.get("input_scale", 1.0)),
            weight_scale=float(q.get("weight_scale", 128.0)),
            activation_coeff_scale=q.get("activation_coeff_scale"),
        )
    return LoadedModel(float_model=float_model, model=model, manifest=manifest, path=path)


# ---------------------------------------------------------------------------
# Float oracle


def float_forward(model: FloatModel, batch: np.ndarray) -> np.ndarray:
    """Reference real-valued forward pass; batch (B,)+input_shape."""
    x = np.moveaxis(np.asarray(batch, dtype=np.float64), 0, -1)
    for layer in model.layers:
        if isinstance(layer, FloatConv2d):
            if layer.bn is not None:
                raise ModelFormatError("fold batchnorm before running the oracle")
            out_ch, cin, kh, kw = layer.weights.shape
            c, h, w, b = x.shape
            win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
            win = win[:, :: layer.stride, :: layer.stride]
            oh, ow = win.shape[1], win.shape[2]
            patches = win.transpose(0, 4, 5, 1, 2, 3).reshape(c * kh * kw, oh * ow * b)
            res = layer.weights.reshape(out_ch, -1) @ patches
            x = res.reshape(out_ch, oh, ow, b) + layer.bias[:, None, None, None]
        elif isinstance(layer, AvgPoolScaled):
            c, h, w, b = x.shape
            k = layer.window
            oh, ow = h // k, w // k
            x = x[:, : oh * k, : ow * k].reshape(c, oh, k, ow, k, b).sum(axis=(2, 4))
        elif isinstance(layer, FloatPolyActivation):
            acc = np.zeros_like(x)
            for c in reversed(layer.coeffs):
                acc = acc * x + c
            x = acc
        elif isinstance(layer, Flatten):
            x = x.reshape(-1, x.shape[-1])
        elif isinstance(layer, FloatDense):
            if layer.bn is not None:
                raise ModelFormatError("fold batchnorm before running the oracle")
            x = layer.weights @ x + layer.bias[:, None]
        else:
            raise ModelFormatError(f"unknown layer {type(layer).__name__}")
    return np.moveaxis(x, -1, 0)


# ---------------------------------------------------------------------------
# MNIST IDX


_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _read_idx_images(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise IdxFormatError("image file truncated before header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != _IMAGES_MAGIC:
        raise IdxFormatError(f"bad image magic 0x{magic:08x}")
    expected = 16 + count * rows * cols
    if len(raw) < expected:
        raise IdxFormatError(f"image file truncated: {len(raw)} < {expected} bytes")
    data = np.frombuffer(raw[16:expected], dtype=np.uint8)
    return data.reshape(count, rows, cols).astype(np.int64)


def _read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise IdxFormatError("label file truncated before header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != _LABELS_MAGIC:
        raise IdxFormatError(f"bad label magic 0x{magic:08x}")
    if len(raw) < 8 + count:
        raise IdxFormatError("label file truncated")
    labels = np.frombuffer(raw[8 : 8 + count], dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label {labels.max()} outside 0-9")
    return labels


def load_mnist(images_path, labels_path):
    """-> (images (N, rows, cols) ints in [0,255], labels (N,) ints in 0-9)."""
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels")
    return images, labels


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of load_mnist, for fixtures and trainer export."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(
        struct.pack(">IIII", _IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    )
    Path(labels_path).write_bytes(struct.pack(">II", _LABELS_MAGIC, n) + labels.tobytes())


# ---------------------------------------------------------------------------
# Fixtures


def gen_fixture_model(seed: int) -> FloatModel:
    """Deterministic small random CNN for tests: conv -> pool -> poly -> dense."""
    rng = np.random.default_rng(seed)
    out_ch = int(rng.integers(2, 5))
    k = int(rng.integers(2, 4))
    model = FloatModel(
        layers=(
            FloatConv2d(
                weights=rng.normal(0, 0.25, (out_ch, 1, k, k)),
                bias=rng.normal(0, 0.1, out_ch),
            ),
            AvgPoolScaled(2),
            FloatPolyActivation((0.25, 0.5, 0.05)),
            Flatten(),
            FloatDense(
                weights=rng.normal(0, 0.25, (4, out_ch * ((8 - k + 1) // 2) ** 2)),
                bias=rng.normal(0, 0.1, 4),
            ),
        ),
        input_shape=(1, 8, 8),
        class_count=4,
    )
    return model


def _sparse_int_filters(rng, shape, l1_budget: int, scale: float) -> np.ndarray:
    """Random filters whose quantized integer weights have L1 norm <= l1_budget."""
    out = np.zeros(shape, dtype=np.float64)
    flat_len = int(np.prod(shape[1:]))
    for o in range(shape[0]):
        remaining = l1_budget
        taps = rng.permutation(flat_len)[: l1_budget]
        for t in taps:
            if remaining == 0:
                break
            mag = int(rng.integers(1, remaining + 1))
            remaining -= mag
            out[o].flat[t] = mag * (1 if rng.random() < 0.5 else -1) / scale
    return out


MODEL1_WEIGHT_SCALE = 128.0
# activation integers are used as-is (97, 23, 2, 1); scaling them by the
# weight scale would push x^3 terms past p/2 for raw [0, 255] pixels
MODEL1_ACTIVATION_COEFF_SCALE = 1.0


def model1_quantization(p: int) -> dict:
    """The manifest `quantization` block that reproduces the fixture's
    integer weights exactly."""
    return {
        "p": p,
        "input_scale": 1.0,
        "weight_scale": MODEL1_WEIGHT_SCALE,
        "activation_coeff_scale": MODEL1_ACTIVATION_COEFF_SCALE,
    }


def model1_fixture(seed: int = 0) -> FloatModel:
    """Canonical MNIST CNN shape with capacity-tuned sparse integer weights:
    conv 20@5x5 -> pool 2 -> conv 50@5x5 -> pool 2 -> degree-3 poly activation
    -> dense 256 -> dense 10.  Weights are dyadic so quantization at scale 128
    reproduces them exactly; L1 budgets keep every intermediate below p/2 for
    the 49-bit prime configuration."""
    rng = np.random.default_rng(seed)
    s = MODEL1_WEIGHT_SCALE
    conv1 = FloatConv2d(
        weights=_sparse_int_filters(rng, (20, 1, 5, 5), l1_budget=2, scale=s),
        bias=rng.integers(-3, 4, 20).astype(np.float64) / s,
    )
    conv2 = FloatConv2d(
        weights=_sparse_int_filters(rng, (50, 20, 5, 5), l1_budget=2, scale=s),
        bias=rng.integers(-3, 4, 50).astype(np.float64) / (s * s),
    )
    # activation integers (a0..a3) chosen for capacity; expressed as the float
    # coefficients that the quantizer's rewrite maps back onto those integers
    s_in = s * s  # scale entering the activation
    a = (97.0, 23.0, 2.0, 1.0)
    coeffs = tuple(a[k] / s_in ** (3 - k) for k in range(4))
    act = FloatPolyActivation(coeffs)
    s_act_out = s_in**3
    dense1 = FloatDense(
        weights=_sparse_int_filters(rng, (256, 800), l1_budget=3, scale=s),
        bias=rng.integers(-3, 4, 256).astype(np.float64) / (s_act_out * s),
    )
    dense2 = FloatDense(
        weights=_sparse_int_filters(rng, (10, 256), l1_budget=2, scale=s),
        bias=rng.integers(-3, 4, 10).astype(np.float64) / (s_act_out * s * s),
    )
    return FloatModel(
        layers=(
            conv1,
            AvgPoolScaled(2),
            conv2,
            AvgPoolScaled(2),
            act,
            Flatten(),
            dense1,
            dense2,
        ),
        input_shape=(1, 28, 28),
        class_count=10,
    )


def default_activation_report(degree: int = 3, half_width: float = 8.0):
    """The stock ReLU replacement: derivative-integral fit on [-l, l]."""
    measure = chebyshev_stretched(half_width)
    return relu_via_derivative(measure.interval, degree - 1, measure)
