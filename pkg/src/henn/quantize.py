"""Fixed-point quantization into Z_p, BN folding, and capacity analysis.

Real weights become signed integers via half-even rounding at a per-tensor
scale; negative values use the balanced representation inside [0, p).  The
capacity check propagates worst-case signed magnitudes through every layer
with interval arithmetic and fails if anything could reach p/2, which would
wrap silently under modular arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._modmath import centered, to_residue
from .nn import (
    AvgPoolScaled,
    Conv2d,
    Dense,
    Flatten,
    ModelSpec,
    PolyActivation,
    layer_name,
)

DEFAULT_INPUT_SCALE = 1.0
DEFAULT_WEIGHT_SCALE = float(2**7)


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointScale:
    scale: float
    tensor_role: str = "weight"  # input | weight | bias

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.tensor_role not in ("input", "weight", "bias"):
            raise ValueError(f"unknown tensor role {self.tensor_role!r}")


def round_half_even(values: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(values, dtype=np.float64))


def quantize_tensor(values, scale: FixedPointScale | float, p: int) -> np.ndarray:
    """v -> round_half_even(v * scale) wrapped into [0, p); rejects overflow."""
    s = scale.scale if isinstance(scale, FixedPointScale) else float(scale)
    if s <= 0:
        raise ValueError("scale must be positive")
    rounded = round_half_even(np.asarray(values, dtype=np.float64) * s)
    if rounded.size and np.abs(rounded).max() >= p / 2:
        raise CapacityError(
            f"quantized magnitude {np.abs(rounded).max():.0f} reaches p/2 = {p / 2:.0f}"
        )
    return to_residue(rounded.astype(np.int64), p)


def dequantize(values, scale: FixedPointScale | float, p: int) -> np.ndarray:
    s = scale.scale if isinstance(scale, FixedPointScale) else float(scale)
    return centered(np.asarray(values, dtype=np.int64), p).astype(np.float64) / s


def fold_batchnorm(weights: np.ndarray, bias: np.ndarray, gamma, beta, mean, var, eps):
    """Absorb BN(x) = gamma*(x-mean)/sqrt(var+eps) + beta into the linear layer.

    weights: (out, ...) per-output-channel leading axis; BN params per channel.
    """
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    gamma, beta, mean, var = (
        np.asarray(a, dtype=np.float64) for a in (gamma, beta, mean, var)
    )
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    factor = gamma / np.sqrt(var + eps)
    shape = (-1,) + (1,) * (weights.ndim - 1)
    return weights * factor.reshape(shape), (bias - mean) * factor + beta


# ---------------------------------------------------------------------------
# Capacity analysis


@dataclass
class CapacityReport:
    p: int
    passed: bool
    layers: list = field(default_factory=list)  # {layer, lo, hi, bound, passed}
    failing_layer: str | None = None
    worst_bound: float = 0.0

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "passed": self.passed,
            "limit": self.p / 2,
            "failing_layer": self.failing_layer,
            "worst_bound": self.worst_bound,
            "layers": self.layers,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def _interval_linear(lo: float, hi: float, weights: np.ndarray, bias: np.ndarray):
    """Worst-case output interval of sum_j w_j * x_j + b with x_j in [lo, hi]."""
    w = weights.reshape(weights.shape[0], -1).astype(np.float64)
    pos = np.clip(w, 0, None).sum(axis=1)
    neg = np.clip(w, None, 0).sum(axis=1)
    b = np.asarray(bias, dtype=np.float64)
    out_lo = pos * lo + neg * hi + b
    out_hi = pos * hi + neg * lo + b
    return float(out_lo.min()), float(out_hi.max())


def _interval_poly(lo: float, hi: float, coeffs) -> tuple[float, float]:
    """Interval bound of sum_k c_k x^k over [lo, hi] via interval powers."""
    out_lo = out_hi = float(coeffs[0]) if len(coeffs) else 0.0
    cur_lo, cur_hi = 1.0, 1.0
    for k in range(1, len(coeffs)):
        # interval power [lo,hi]^k via repeated interval multiply
        cands = (cur_lo * lo, cur_lo * hi, cur_hi * lo, cur_hi * hi)
        cur_lo, cur_hi = min(cands), max(cands)
        c = float(coeffs[k])
        if c >= 0:
            out_lo += c * cur_lo
            out_hi += c * cur_hi
        else:
            out_lo += c * cur_hi
            out_hi += c * cur_lo
    return out_lo, out_hi


def capacity_check(model: ModelSpec, input_range, p: int) -> CapacityReport:
    """Interval-arithmetic propagation of worst-case magnitudes vs p/2.

    Layer weights are read in their signed (centered) interpretation.
    """
    lo, hi = float(input_range[0]), float(input_range[1])
    if lo > hi:
        raise ValueError("input range lo must be <= hi")
    limit = p / 2
    report = CapacityReport(p=p, passed=True)
    for idx, layer in enumerate(model.layers):
        name = layer_name(layer, idx)
        if isinstance(layer, (Conv2d, Dense)):
            w = centered(layer.weights, p)
            b = centered(layer.bias, p)
            lo, hi = _interval_linear(lo, hi, w, b)
        elif isinstance(layer, AvgPoolScaled):
            k = layer.window * layer.window
            lo, hi = k * lo, k * hi
        elif isinstance(layer, PolyActivation):
            signed = [int(centered(np.int64(int(c) % p), p)) for c in layer.coeffs]
            lo, hi = _interval_poly(lo, hi, signed)
        elif isinstance(layer, Flatten):
            pass
        bound = max(abs(lo), abs(hi))
        ok = bound < limit
        report.layers.append(
            {"layer": name, "lo": lo, "hi": hi, "bound": bound, "passed": ok}
        )
        report.worst_bound = max(report.worst_bound, bound)
        if not ok and report.passed:
            report.passed = False
            report.failing_layer = name
    return report


# ---------------------------------------------------------------------------
# Whole-model quantization (floats -> ModelSpec)


@dataclass(frozen=True)
class FloatConv2d:
    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    bn: dict | None = None  # {gamma, beta, mean, var, eps}; folded at load time


@dataclass(frozen=True)
class FloatDense:
    weights: np.ndarray
    bias: np.ndarray
    bn: dict | None = None


@dataclass(frozen=True)
class FloatPolyActivation:
    coeffs: tuple  # real ascending coefficients


@dataclass(frozen=True)
class FloatModel:
    layers: tuple
    input_shape: tuple
    class_count: int


def fold_model(model: FloatModel) -> FloatModel:
    """Fold every attached batchnorm into its linear layer."""
    from dataclasses import replace

    layers = []
    for layer in model.layers:
        if isinstance(layer, (FloatConv2d, FloatDense)) and layer.bn is not None:
            bn = layer.bn
            w, b = fold_batchnorm(
                layer.weights,
                layer.bias,
                bn["gamma"],
                bn["beta"],
                bn["mean"],
                bn["var"],
                bn.get("eps", 1e-5),
            )
            layers.append(replace(layer, weights=w, bias=b, bn=None))
        else:
            layers.append(layer)
    return replace(model, layers=tuple(layers))


def rewrite_activation_coeffs(
    coeffs, scale_in: float, coeff_scale: float
) -> tuple[list[int], float]:
    """Absorb the incoming scale: c_k -> round(c_k * s_out / s_in^k), with
    s_out = coeff_scale * s_in^degree, so integer outputs sit at scale s_out."""
    degree = len(coeffs) - 1
    scale_out = coeff_scale * scale_in**degree
    ints = [
        int(round_half_even(float(c) * scale_out / scale_in**k))
        for k, c in enumerate(coeffs)
    ]
    return ints, scale_out


def quantize_model(
    model: FloatModel,
    p: int,
    input_scale: float = DEFAULT_INPUT_SCALE,
    weight_scale: float = DEFAULT_WEIGHT_SCALE,
    activation_coeff_scale: float | None = None,
    metadata: dict | None = None,
) -> ModelSpec:
    """Quantize every tensor and thread the cumulative scale through layers.

    Value scale evolves: linear layers multiply it by weight_scale (bias is
    quantized at the accumulated scale so addition is consistent); pooling
    keeps it; activations emit coeff_scale * s_in^degree.
    """
    coeff_scale = (
        weight_scale if activation_coeff_scale is None else activation_coeff_scale
    )
    layers: list = []
    s = input_scale
    for layer in model.layers:
        if isinstance(layer, FloatConv2d):
            s_out = s * weight_scale
            layers.append(
                Conv2d(
                    weights=quantize_tensor(layer.weights, weight_scale, p),
                    bias=quantize_tensor(layer.bias, s_out, p),
                    stride=layer.stride,
                    scale=s_out,
                )
            )
            s = s_out
        elif isinstance(layer, FloatDense):
            s_out = s * weight_scale
            layers.append(
                Dense(
                    weights=quantize_tensor(layer.weights, weight_scale, p),
                    bias=quantize_tensor(layer.bias, s_out, p),
                    scale=s_out,
                )
            )
            s = s_out
        elif isinstance(layer, FloatPolyActivation):
            ints, s_out = rewrite_activation_coeffs(layer.coeffs, s, coeff_scale)
            layers.append(
                PolyActivation(
                    coeffs=tuple(int(c) % p for c in ints),
                    scale_in=s,
                    scale_out=s_out,
                )
            )
            s = s_out
        elif isinstance(layer, AvgPoolScaled):
            layers.append(layer)
        elif isinstance(layer, Flatten):
            layers.append(layer)
        else:
            raise ValueError(f"cannot quantize layer {type(layer).__name__}")
    meta = dict(metadata or {})
    meta.setdefault("input_scale", input_scale)
    meta.setdefault("weight_scale", weight_scale)
    meta.setdefault("output_scale", s)
    return ModelSpec(
        layers=layers,
        input_shape=model.input_shape,
        class_count=model.class_count,
        p=p,
        metadata=meta,
    )
