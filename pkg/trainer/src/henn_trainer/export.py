"""Export trained weights and reference activations for the inference engine.

The interchange is file-based: a JSON manifest with an optional sibling
little-endian f32 blob for large tensors (format_version 1), plus a fixture
JSON holding input images and the float activations the engine should
reproduce after dequantization.  The schema is implemented here from its
documentation; nothing is imported from the inference package.

Manifest layout:

    {"format_version": 1, "input_shape": [1,28,28], "class_count": 10,
     "quantization": {"p", "input_scale", "weight_scale",
                      "activation_coeff_scale"},
     "blob_file": "<name>.bin",   # when any tensor is externalized
     "layers": [
        {"type": "conv2d", "stride", "shape", "weights", "bias",
         "batchnorm": {"gamma","beta","mean","var","eps"}?},
        {"type": "avg_pool_scaled", "window"},
        {"type": "poly_activation", "coeffs"},
        {"type": "flatten"},
        {"type": "dense", "shape", "weights", "bias", "batchnorm"?}]}

A tensor is an inline nested JSON array when it has <= 64 elements,
otherwise {"blob": {"offset": <bytes>, "length": <element count>}}.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .model import Model1

FORMAT_VERSION = 1
_INLINE_LIMIT = 64
DEFAULT_P = 562949953423489  # 49-bit prime plaintext modulus

# Quantization schedule for the exported model.  The network consumes pixels
# normalized to [0, 1]; the cumulative scale at the logits is
# input_scale^2 * weight_scale^6 (the squared activation doubles the input
# factor), and that times the capped logit magnitude must stay below p/2.
# These values were chosen by sweeping for classification agreement between
# the integer engine and the float model while keeping ~5x wrap headroom.
INPUT_SCALE = 16.0
WEIGHT_SCALE = 56.0
ACTIVATION_COEFF_SCALE = 1.0


class _BlobWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def tensor(self, values) -> dict | list:
        arr = np.asarray(values, dtype=np.float32)
        if arr.size <= _INLINE_LIMIT:
            return arr.tolist()
        raw = arr.astype("<f4").tobytes()
        ref = {"blob": {"offset": self.offset, "length": int(arr.size)}}
        self.chunks.append(raw)
        self.offset += len(raw)
        return ref


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy()


def _bn_entry(bn: torch.nn.BatchNorm2d) -> dict:
    return {
        "gamma": _np(bn.weight).tolist(),
        "beta": _np(bn.bias).tolist(),
        "mean": _np(bn.running_mean).tolist(),
        "var": _np(bn.running_var).tolist(),
        "eps": float(bn.eps),
    }


def export_model(model: Model1, path, p: int = DEFAULT_P) -> Path:
    """Write the manifest at `path` (blob beside it); returns the path.

    Batchnorm goes out unfolded; the engine folds it at load time.  Run
    prepare_for_export first so the weights survive integer quantization
    and the logits fit the modulus.
    """
    path = Path(path)
    blob = _BlobWriter()
    coeffs = [float(c) for c in model.act.coeffs] if hasattr(model.act, "coeffs") else None
    if coeffs is None:
        raise ValueError("only polynomial-activation models are exportable")
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()  # a trailing zero would inflate the engine's scale schedule
    layers = [
        {
            "type": "conv2d",
            "stride": 1,
            "shape": list(model.conv1.weight.shape),
            "weights": blob.tensor(_np(model.conv1.weight)),
            "bias": blob.tensor(_np(model.conv1.bias)),
            "batchnorm": _bn_entry(model.bn1),
        },
        {"type": "avg_pool_scaled", "window": model.pool1.window},
        {
            "type": "conv2d",
            "stride": 1,
            "shape": list(model.conv2.weight.shape),
            "weights": blob.tensor(_np(model.conv2.weight)),
            "bias": blob.tensor(_np(model.conv2.bias)),
            "batchnorm": _bn_entry(model.bn2),
        },
        {"type": "avg_pool_scaled", "window": model.pool2.window},
        {"type": "poly_activation", "coeffs": coeffs},
        {"type": "flatten"},
        {
            "type": "dense",
            "shape": list(model.fc1.weight.shape),
            "weights": blob.tensor(_np(model.fc1.weight)),
            "bias": blob.tensor(_np(model.fc1.bias)),
        },
        {
            "type": "dense",
            "shape": list(model.fc2.weight.shape),
            "weights": blob.tensor(_np(model.fc2.weight)),
            "bias": blob.tensor(_np(model.fc2.bias)),
        },
    ]
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": [1, 28, 28],
        "class_count": 10,
        "quantization": {
            "p": int(p),
            "input_scale": INPUT_SCALE,
            "weight_scale": WEIGHT_SCALE,
            "activation_coeff_scale": ACTIVATION_COEFF_SCALE,
        },
        "layers": layers,
    }
    if blob.chunks:
        blob_path = path.with_suffix(".bin")
        manifest["blob_file"] = blob_path.name
        blob_path.write_bytes(b"".join(blob.chunks))
    path.write_text(json.dumps(manifest, indent=1))
    return path


@torch.no_grad()
def export_fixtures(
    model: Model1, images: np.ndarray, labels: np.ndarray, path, model_file: str
) -> Path:
    """Reference activations for `images` ((N,28,28) raw pixels 0-255) as JSON.

    The stored "images" are the floats the network consumes (pixels / 255);
    consumers quantize them by the manifest's input_scale.  Records the
    float output of every named stage plus the final logits.
    """
    model.eval()
    norm = np.ascontiguousarray(images, dtype=np.float32) / 255.0
    x = torch.from_numpy(norm).unsqueeze(1)
    stages = []

    def record(name, t):
        stages.append(
            {"name": name, "shape": list(t.shape[1:]), "values": _np(t).tolist()}
        )

    h = model.pool1(model.bn1(model.conv1(x)))
    record("conv1_pool", h)
    h = model.pool2(model.bn2(model.conv2(h)))
    record("conv2_pool", h)
    h = model.act(h)
    record("activation", h)
    h = torch.flatten(h, 1)
    h = model.fc1(h)
    record("fc1", h)
    logits = model.fc2(h)

    path = Path(path)
    path.write_text(
        json.dumps(
            {
                "format_version": FORMAT_VERSION,
                "model_file": model_file,
                "images": norm.astype(np.float64).tolist(),
                "labels": np.asarray(labels, dtype=np.int64).tolist(),
                "stages": stages,
                "logits": _np(logits).tolist(),
            }
        )
    )
    return path
