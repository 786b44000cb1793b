"""Activation functions and the five low-degree replacement constructions.

The replacement routes, in the order they are usually compared:
  1. least-squares fit through sampled points (fit_points)
  2. truncated Taylor series (taylor_poly / relu_taylor_replacement)
  3. projection under the stretched Chebyshev weight
  4. projection under the bump weight exp(-1/(eps + x^2))
  5. fit the Sigmoid as a smooth surrogate of ReLU's derivative, then
     integrate the fitted polynomial (relu_via_derivative)

Routes 3 and 4 are plain project() calls with the matching measure; this
module adds the pieces that are not bare projections.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .basis import OrthoBasis, gram_schmidt, project, sup_error
from .measures import Interval, Measure, chebyshev_stretched, inner_product, modified_relu
from .poly import Polynomial
from .report import ApproxReport, Method

LN2 = math.log(2.0)


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"


def relu(x):
    return np.maximum(0.0, np.asarray(x, dtype=float))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def tanh(x):
    # equal to 2*sigmoid(2x) - 1 to within float rounding
    return np.tanh(np.asarray(x, dtype=float))


_ACTIVATIONS = {
    ActivationKind.RELU: relu,
    ActivationKind.SIGMOID: sigmoid,
    ActivationKind.TANH: tanh,
}


def activation(kind: ActivationKind, x):
    return _ACTIVATIONS[kind](x)


_MAX_TAYLOR_DEGREE = 9


def _series_at_zero(kind: ActivationKind, degree: int) -> list[float]:
    """Maclaurin coefficients via the logistic/tanh derivative recurrences.

    sigma' = sigma*(1-sigma) and tanh' = 1 - tanh^2 let every derivative be
    written as a polynomial in the function value itself, so the coefficients
    come out exactly (up to float64) with no symbolic machinery.
    """
    if kind is ActivationKind.SIGMOID:
        gen = Polynomial((0.0, 1.0, -1.0))  # y(1-y)
        y0 = 0.5
    elif kind is ActivationKind.TANH:
        gen = Polynomial((1.0, 0.0, -1.0))  # 1 - y^2
        y0 = 0.0
    else:
        raise ValueError(f"no Taylor series for {kind}")
    # rep[k] expresses the k-th derivative as a polynomial in y
    rep = Polynomial((0.0, 1.0))
    coeffs = [rep(y0)]
    fact = 1.0
    for k in range(1, degree + 1):
        rep = Polynomial.product(rep.derivative(), gen)
        fact *= k
        coeffs.append(rep(y0) / fact)
    return coeffs


def taylor_poly(kind: ActivationKind, center: float, degree: int) -> Polynomial:
    """Truncated Taylor expansion of Sigmoid or Tanh about `center`."""
    if kind not in (ActivationKind.SIGMOID, ActivationKind.TANH):
        raise ValueError(f"taylor_poly supports Sigmoid and Tanh, not {kind}")
    if not 0 <= degree <= _MAX_TAYLOR_DEGREE:
        raise ValueError(f"degree must be in [0, {_MAX_TAYLOR_DEGREE}], got {degree}")
    if center == 0.0:
        return Polynomial(tuple(_series_at_zero(kind, degree)))
    # shift: recompute the derivative recurrence at y0 = f(center)
    if kind is ActivationKind.SIGMOID:
        gen, y0 = Polynomial((0.0, 1.0, -1.0)), float(sigmoid(center))
    else:
        gen, y0 = Polynomial((1.0, 0.0, -1.0)), float(tanh(center))
    rep = Polynomial((0.0, 1.0))
    local = [rep(y0)]
    fact = 1.0
    for k in range(1, degree + 1):
        rep = Polynomial.product(rep.derivative(), gen)
        fact *= k
        local.append(rep(y0) / fact)
    # expand sum a_k (x - c)^k into the monomial basis
    shifted = Polynomial(())
    term = Polynomial((1.0,))
    x_minus_c = Polynomial((-center, 1.0))
    for a in local:
        shifted = shifted + a * term
        term = Polynomial.product(term, x_minus_c)
    return shifted


def relu_taylor_replacement(degree: int) -> Polynomial:
    """Taylor-route stand-in for ReLU: the truncated softplus series.

    softplus = log(1 + e^x) has softplus' = sigmoid, so its Maclaurin series
    is the antiderivative of the Sigmoid series with constant log 2.  This is
    the smooth function whose series a Taylor method can actually use, since
    ReLU itself has no expansion at 0.
    """
    if not 1 <= degree <= _MAX_TAYLOR_DEGREE:
        raise ValueError(f"degree must be in [1, {_MAX_TAYLOR_DEGREE}], got {degree}")
    sig = taylor_poly(ActivationKind.SIGMOID, 0.0, degree - 1)
    return sig.antiderivative(LN2)


def fit_points(samples, degree: int) -> ApproxReport:
    """Least-squares polynomial through (x, y) samples (replacement route 1)."""
    xs = np.asarray([s[0] for s in samples], dtype=float)
    ys = np.asarray([s[1] for s in samples], dtype=float)
    if len(xs) < degree + 1:
        raise ValueError(f"need at least {degree + 1} samples for degree {degree}")
    if len(np.unique(xs)) < degree + 1:
        raise ValueError(f"need at least {degree + 1} distinct x values for degree {degree}")
    vander = np.vander(xs, degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(vander, ys, rcond=None)
    if rank < degree + 1:
        raise ValueError("rank-deficient sample set")
    p = Polynomial(tuple(coeffs))
    resid = ys - p(xs)
    return ApproxReport(
        poly=p,
        sup_error=float(np.max(np.abs(resid))),
        l2_error=float(np.sqrt(np.mean(resid**2))),
        method=Method.POINT_FIT,
        interval=Interval(float(xs.min()), float(xs.max())),
    )


def relu_via_derivative(
    interval: Interval,
    sigmoid_degree: int,
    measure: Measure | None = None,
    basis: OrthoBasis | None = None,
) -> ApproxReport:
    """Replacement route 5: project Sigmoid, integrate, recenter against ReLU.

    The integration constant is the L2(mu)-optimal choice, i.e. the mu-mean of
    (ReLU - P0) where P0 is the constant-free antiderivative.
    """
    if sigmoid_degree < 0:
        raise ValueError("sigmoid_degree must be >= 0")
    if abs(interval.lo + interval.hi) > 1e-12 * interval.length:
        raise ValueError("interval must be symmetric")
    if measure is None:
        measure = chebyshev_stretched(interval.hi)
    if basis is None:
        basis = gram_schmidt(measure, sigmoid_degree)
    surrogate = project(sigmoid, basis).poly
    p0 = surrogate.antiderivative(0.0)
    mass = inner_product(lambda x: np.ones_like(x), lambda x: np.ones_like(x), measure, basis.rule)
    resid = inner_product(lambda x: relu(x) - p0(x), lambda x: np.ones_like(x), measure, basis.rule)
    c = resid / mass
    result = p0 + Polynomial((c,))
    xs = interval.grid(10001)
    sup = float(np.max(np.abs(relu(xs) - result(xs))))
    diff = lambda x: relu(x) - result(x)
    l2 = math.sqrt(max(inner_product(diff, diff, measure, basis.rule) / 1.0, 0.0))
    return ApproxReport(
        poly=result,
        sup_error=sup,
        l2_error=l2,
        method=Method.DERIVATIVE_INTEGRAL,
        interval=interval,
    )


def approximate_activation(
    kind: ActivationKind,
    degree: int,
    measure: Measure,
) -> ApproxReport:
    """Project an activation onto an orthonormal basis under the measure."""
    basis = gram_schmidt(measure, degree)
    return project(_ACTIVATIONS[kind], basis)


def modified_relu_report(degree: int, l: float = 8.0, eps: float = 1e-5) -> ApproxReport:
    """Replacement route 4: ReLU under the bump weight."""
    basis = gram_schmidt(modified_relu(l, eps), degree)
    return project(relu, basis, method=Method.CHEBYSHEV_MODIFIED)
