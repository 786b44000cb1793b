"""Function-preserving surgery that makes a trained model quantizable.

The inference engine quantizes every linear layer with one shared weight
scale.  Trained weights are small and unevenly sized (batchnorm soaks up
magnitude), so without help most integer weights would round to zero.  Two
exact rewrites fix that:

- rebalance: move magnitude between adjacent linear layers.  Scaling
  batchnorm-1's gamma/beta per channel and dividing conv-2's matching input
  channels keeps the composite map identical; likewise scaling dense-1 rows
  against dense-2 columns.  Each pair is balanced to its geometric mean so
  both layers quantize with similar relative error.
- cap_logits: scale the final dense layer so |logit| stays under a small
  bound.  Argmax is invariant under positive scaling of the last layer, and
  the accumulated quantization scale times the logit magnitude must stay
  below p/2.

Both rewrites change the float function by at most the final global logit
scale, which tests verify exactly.
"""

from __future__ import annotations

import numpy as np
import torch

from .model import Model1

_FACTOR_LIMIT = 64.0  # clamp rescale factors; guards dead channels/units
LOGIT_BOUND = 8.0


def _folded_conv_weights(conv, bn) -> np.ndarray:
    g = bn.weight.detach().numpy()
    v = bn.running_var.detach().numpy()
    f = g / np.sqrt(v + bn.eps)
    return conv.weight.detach().numpy() * f[:, None, None, None]


def _clamp(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 1.0 / _FACTOR_LIMIT, _FACTOR_LIMIT)


@torch.no_grad()
def rebalance(model: Model1) -> None:
    """Equalize per-pair weight magnitudes; the network function is unchanged."""
    w1 = _folded_conv_weights(model.conv1, model.bn1)
    w2 = _folded_conv_weights(model.conv2, model.bn2)
    m1 = np.abs(w1).max(axis=(1, 2, 3))  # per conv1 output channel
    m2 = np.abs(w2).max(axis=(0, 2, 3))  # per conv2 input channel
    d = _clamp(np.sqrt(m2 / np.maximum(m1, 1e-12)))
    dt = torch.from_numpy(d.astype(np.float32))
    model.bn1.weight *= dt
    model.bn1.bias *= dt
    model.conv2.weight /= dt[None, :, None, None]

    a1 = model.fc1.weight.detach().numpy()
    a2 = model.fc2.weight.detach().numpy()
    n1 = np.abs(a1).max(axis=1)  # per fc1 output unit
    n2 = np.abs(a2).max(axis=0)  # per fc2 input unit
    e = _clamp(np.sqrt(n2 / np.maximum(n1, 1e-12)))
    et = torch.from_numpy(e.astype(np.float32))
    model.fc1.weight *= et[:, None]
    model.fc1.bias *= et
    model.fc2.weight /= et[None, :]


@torch.no_grad()
def squarify_activation(model: Model1) -> None:
    """Rewrite the degree-2 activation a0 + a1 x + a2 x^2 as u^2 + k with
    u = alpha x + beta folded into batchnorm-2 (alpha = sqrt(a2),
    beta = a1 / (2 alpha), k = a0 - a1^2/(4 a2)).  Exactly the same
    function, but the quadratic coefficient becomes 1, which quantizes
    exactly at coefficient scale 1."""
    coeffs = [float(c) for c in model.act.coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    if len(coeffs) != 3 or coeffs[2] <= 0:
        raise ValueError("activation must be quadratic with positive x^2 term")
    a0, a1, a2 = coeffs
    alpha = a2**0.5
    beta = a1 / (2 * alpha)
    k = a0 - a1 * a1 / (4 * a2)
    window_area = model.pool2.window**2  # pooling sums before the activation
    model.bn2.weight *= alpha
    model.bn2.bias.mul_(alpha).add_(beta / window_area)
    model.act.coeffs = torch.tensor([k, 0.0, 1.0], dtype=torch.float32)


@torch.no_grad()
def cap_logits(model: Model1, sample: np.ndarray, bound: float = LOGIT_BOUND) -> float:
    """Scale fc2 so max |logit| over `sample` is <= bound; returns the factor."""
    model.eval()
    x = torch.from_numpy(np.ascontiguousarray(sample, dtype=np.float32)).unsqueeze(1)
    peak = float(model(x).abs().max())
    lam = min(1.0, bound / peak) if peak > 0 else 1.0
    model.fc2.weight *= lam
    model.fc2.bias *= lam
    return lam


def prepare_for_export(model: Model1, sample: np.ndarray) -> float:
    """Squarify, cap logits, then rebalance; returns the logit scale factor.

    Capping runs before the rebalance so the final-layer shrink is itself
    spread across the dense pair instead of crushing only fc2's weights.
    """
    squarify_activation(model)
    lam = cap_logits(model, sample)
    rebalance(model)
    return lam
