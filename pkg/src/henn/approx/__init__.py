"""Low-degree polynomial approximation of activation functions."""

from .basis import OrthoBasis, default_rule, gram_schmidt, l2_error, project, sup_error
from .measures import (
    DegenerateMeasureError,
    Interval,
    Measure,
    MeasureFamily,
    QuadratureRule,
    chebyshev_stretched,
    gaussian_tail,
    inner_product,
    lebesgue,
    modified_relu,
    quadrature_for,
)
from .methods import (
    ActivationKind,
    activation,
    approximate_activation,
    fit_points,
    modified_relu_report,
    relu,
    relu_taylor_replacement,
    relu_via_derivative,
    sigmoid,
    tanh,
    taylor_poly,
)
from .poly import Polynomial, eval_poly_real
from .report import ApproxReport, Method

__all__ = [
    "ActivationKind",
    "ApproxReport",
    "DegenerateMeasureError",
    "Interval",
    "Measure",
    "MeasureFamily",
    "Method",
    "OrthoBasis",
    "Polynomial",
    "QuadratureRule",
    "activation",
    "approximate_activation",
    "chebyshev_stretched",
    "default_rule",
    "eval_poly_real",
    "fit_points",
    "gaussian_tail",
    "gram_schmidt",
    "inner_product",
    "l2_error",
    "lebesgue",
    "modified_relu",
    "modified_relu_report",
    "project",
    "quadrature_for",
    "relu",
    "relu_taylor_replacement",
    "relu_via_derivative",
    "sigmoid",
    "sup_error",
    "tanh",
    "taylor_poly",
]
