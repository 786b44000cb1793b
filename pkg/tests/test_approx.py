"""Measures, orthonormal bases, and the five activation-replacement routes.

Frozen constants were computed with scipy.integrate.quad as an independent
oracle and pinned here; the library itself never touches scipy.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from henn import approx
from henn.approx import (
    ActivationKind,
    ApproxReport,
    DegenerateMeasureError,
    Interval,
    Method,
    Polynomial,
    approximate_activation,
    chebyshev_stretched,
    fit_points,
    gaussian_tail,
    gram_schmidt,
    inner_product,
    lebesgue,
    modified_relu,
    modified_relu_report,
    project,
    quadrature_for,
    relu,
    relu_taylor_replacement,
    relu_via_derivative,
    sigmoid,
    sup_error,
    tanh,
    taylor_poly,
)

ALL_MEASURES = [
    lebesgue(-8.0, 8.0),
    chebyshev_stretched(8.0),
    gaussian_tail(8.0),
    modified_relu(8.0),
]

# scipy.integrate.quad oracles (adaptive, singularity-aware)
MASS_CHEB_L8 = math.pi  # weight integrates to pi independently of l
MASS_GAUSS_L2 = 0.35629542356301824
MASS_MRELU_L8 = 12.704452134767589
SIGMOID_MEAN_LEBESGUE_L8 = 8.0  # symmetry: sigma(x) + sigma(-x) = 1
SIGMOID_MEAN_CHEB_L8 = math.pi / 2.0


# ---------------------------------------------------------------------------
# Polynomial arithmetic


def test_polynomial_trims_trailing_zeros():
    p = Polynomial((1.0, 2.0, 0.0, 0.0))
    assert p.coeffs == (1.0, 2.0)
    assert p.degree == 1
    assert Polynomial(()).degree == -1


def test_polynomial_eval_and_algebra():
    p = Polynomial((1.0, 0.0, 3.0))  # 1 + 3x^2
    assert p(2.0) == 13.0
    assert np.allclose(p(np.array([0.0, 1.0])), [1.0, 4.0])
    q = p + Polynomial((0.0, 1.0))
    assert q.coeffs == (1.0, 1.0, 3.0)
    assert (2.0 * p).coeffs == (2.0, 0.0, 6.0)
    assert Polynomial.product(p, Polynomial((0.0, 1.0))).coeffs == (0.0, 1.0, 0.0, 3.0)


def test_derivative_antiderivative_inverse():
    p = Polynomial((3.0, 1.0, 4.0, 1.0))
    assert p.derivative().antiderivative(3.0).coeffs == p.coeffs


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(-3, 3))
def test_horner_matches_numpy(coeffs, x):
    p = Polynomial(tuple(coeffs))
    expected = sum(c * x**k for k, c in enumerate(p.coeffs))
    assert p(x) == pytest.approx(expected, rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------------------
# Measures and quadrature


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    with pytest.raises(ValueError):
        Interval.symmetric(-2.0)


def test_measure_masses_match_adaptive_quadrature():
    one = lambda x: np.ones_like(x)
    assert inner_product(one, one, chebyshev_stretched(8.0)) == pytest.approx(
        MASS_CHEB_L8, abs=1e-9
    )
    assert inner_product(one, one, gaussian_tail(2.0)) == pytest.approx(
        MASS_GAUSS_L2, rel=1e-9
    )
    assert inner_product(one, one, modified_relu(8.0)) == pytest.approx(
        MASS_MRELU_L8, rel=1e-9
    )
    assert inner_product(one, one, lebesgue(-8.0, 8.0)) == pytest.approx(16.0, rel=1e-12)


def test_sigmoid_means_match_adaptive_quadrature():
    one = lambda x: np.ones_like(x)
    assert inner_product(sigmoid, one, lebesgue(-8.0, 8.0)) == pytest.approx(
        SIGMOID_MEAN_LEBESGUE_L8, rel=1e-10
    )
    assert inner_product(sigmoid, one, chebyshev_stretched(8.0)) == pytest.approx(
        SIGMOID_MEAN_CHEB_L8, abs=1e-9
    )


def test_chebyshev_rule_avoids_endpoints():
    rule = quadrature_for(chebyshev_stretched(5.0), 64)
    assert np.abs(rule.nodes).max() < 5.0


def test_odd_moments_vanish_under_symmetric_measures():
    for m in ALL_MEASURES[1:]:  # symmetric families
        x_cubed = lambda x: x**3
        one = lambda x: np.ones_like(x)
        assert inner_product(x_cubed, one, m) == pytest.approx(0.0, abs=1e-8)


def test_asymmetric_interval_rejected_by_stretched_families():
    m = Measure = chebyshev_stretched(3.0)
    bad = approx.Measure(m.family, Interval(-1.0, 3.0))
    with pytest.raises(ValueError):
        bad.half_width


# ---------------------------------------------------------------------------
# Gram-Schmidt orthonormality


@pytest.mark.parametrize("measure", ALL_MEASURES, ids=lambda m: m.family.value)
def test_gram_matrix_is_identity(measure):
    degree = 8
    basis = gram_schmidt(measure, degree)
    # independent check: double-resolution quadrature, not the basis's own rule
    rule = quadrature_for(measure, 2 * len(basis.rule.nodes))
    vals = np.stack([p(rule.nodes) for p in basis.polys])
    gram = (vals * rule.weights) @ vals.T
    assert np.max(np.abs(gram - np.eye(degree + 1))) < 1e-6


def test_basis_degrees_and_leading_signs():
    basis = gram_schmidt(lebesgue(-1.0, 1.0), 5)
    for k, p in enumerate(basis.polys):
        assert p.degree == k
        assert p.coeffs[-1] > 0


def test_legendre_recovery_on_unit_interval():
    """Lebesgue on [-1,1] must reproduce normalized Legendre polynomials."""
    basis = gram_schmidt(lebesgue(-1.0, 1.0), 3)
    # orthonormal Legendre: sqrt((2k+1)/2) * P_k
    assert basis.polys[0].coeffs == pytest.approx((math.sqrt(0.5),), rel=1e-12)
    assert basis.polys[1].coeffs == pytest.approx((0.0, math.sqrt(1.5)), abs=1e-12)
    p2 = basis.polys[2]
    scale = math.sqrt(2.5)
    assert p2.coeffs == pytest.approx((-0.5 * scale, 0.0, 1.5 * scale), abs=1e-10)


def test_degenerate_measure_raises():
    # a near-point-mass bump cannot support high degrees
    with pytest.raises(DegenerateMeasureError):
        gram_schmidt(modified_relu(1e-3, eps=1e-12), 8)


# ---------------------------------------------------------------------------
# Projection


@pytest.mark.parametrize("measure", ALL_MEASURES, ids=lambda m: m.family.value)
def test_projection_reproduces_subspace_members(measure):
    basis = gram_schmidt(measure, 4)
    target = Polynomial((0.3, -1.2, 0.0, 2.0))
    report = project(lambda x: target(x), basis)
    xs = measure.interval.grid(101)
    assert np.max(np.abs(report.poly(xs) - target(xs))) < 1e-8
    # direct difference integral; the Parseval form cancels catastrophically
    assert approx.l2_error(lambda x: target(x), report.poly, measure) < 1e-8


def test_projection_is_l2_optimal_against_perturbations(rng):
    measure = chebyshev_stretched(8.0)
    basis = gram_schmidt(measure, 3)
    report = project(relu, basis)
    base = approx.l2_error(relu, report.poly, measure, basis.rule)
    for _ in range(20):
        delta = rng.normal(0, 0.05, size=4)
        perturbed = report.poly + Polynomial(tuple(delta))
        worse = approx.l2_error(relu, perturbed, measure, basis.rule)
        if np.linalg.norm(delta) > 1e-12:
            assert worse > base


@pytest.mark.parametrize("measure", ALL_MEASURES, ids=lambda m: m.family.value)
@pytest.mark.parametrize("kind", list(ActivationKind))
def test_l2_error_non_increasing_in_degree(measure, kind):
    errors = [
        approximate_activation(kind, d, measure).l2_error for d in range(1, 7)
    ]
    for lo, hi in zip(errors[1:], errors[:-1]):
        assert lo <= hi + 1e-12


def test_report_json_round_trip():
    rep = approximate_activation(ActivationKind.SIGMOID, 3, chebyshev_stretched(8.0))
    again = ApproxReport.from_json(rep.to_json())
    assert again == rep


def test_report_rejects_bad_errors():
    with pytest.raises(ValueError):
        ApproxReport(
            poly=Polynomial((1.0,)),
            sup_error=-1.0,
            l2_error=0.0,
            method=Method.TAYLOR,
            interval=Interval(-1, 1),
        )


# ---------------------------------------------------------------------------
# Taylor route (route 2)


def test_sigmoid_taylor_coefficients_exact():
    # sigma(x) = 1/2 + x/4 - x^3/48 + O(x^5)
    got = taylor_poly(ActivationKind.SIGMOID, 0.0, 3).coeffs
    assert got == pytest.approx((0.5, 0.25, 0.0, -1.0 / 48.0), rel=1e-12)


def test_tanh_taylor_coefficients_exact():
    # tanh(x) = x - x^3/3 + 2x^5/15 + O(x^7)
    got = taylor_poly(ActivationKind.TANH, 0.0, 5).coeffs
    assert got == pytest.approx(
        (0.0, 1.0, 0.0, -1.0 / 3.0, 0.0, 2.0 / 15.0), rel=1e-12
    )


def test_taylor_off_center_matches_finite_difference():
    p = taylor_poly(ActivationKind.SIGMOID, 1.0, 2)
    assert p(1.0) == pytest.approx(float(sigmoid(1.0)), rel=1e-12)
    h = 1e-6
    deriv = (float(sigmoid(1.0 + h)) - float(sigmoid(1.0 - h))) / (2 * h)
    assert p.derivative()(1.0) == pytest.approx(deriv, rel=1e-5)


def test_relu_taylor_replacement_is_softplus_series():
    got = relu_taylor_replacement(3).coeffs
    assert got == pytest.approx((math.log(2.0), 0.5, 0.125), rel=1e-12)


def test_taylor_degree_limits():
    with pytest.raises(ValueError):
        taylor_poly(ActivationKind.SIGMOID, 0.0, 10)
    with pytest.raises(ValueError):
        relu_taylor_replacement(0)
    with pytest.raises(ValueError):
        taylor_poly(ActivationKind.RELU, 0.0, 3)


# ---------------------------------------------------------------------------
# Point-fit route (route 1)


def test_fit_points_interpolates_exactly_sized_sample():
    samples = [(x, 2.0 * x**2 - x + 1.0) for x in (-1.0, 0.0, 1.5)]
    rep = fit_points(samples, 2)
    assert rep.poly.coeffs == pytest.approx((1.0, -1.0, 2.0), rel=1e-9)
    assert rep.sup_error < 1e-9


def test_fit_points_requires_enough_distinct_points():
    with pytest.raises(ValueError):
        fit_points([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)], 2)
    with pytest.raises(ValueError):
        fit_points([(0.0, 0.0)], 1)


@given(st.integers(0, 3))
def test_fit_points_never_beats_projection_l2(degree):
    # least squares over samples is optimal for its own nodes; sanity only
    xs = np.linspace(-8, 8, 33)
    rep = fit_points([(x, float(relu(x))) for x in xs], degree)
    assert rep.l2_error >= 0.0
    assert rep.poly.degree <= degree


# ---------------------------------------------------------------------------
# Method 5 (derivative route) structure


def test_method5_derivative_equals_sigmoid_surrogate():
    measure = chebyshev_stretched(8.0)
    basis = gram_schmidt(measure, 2)
    surrogate = project(sigmoid, basis).poly
    rep = relu_via_derivative(Interval.symmetric(8.0), 2, measure=measure, basis=basis)
    assert rep.poly.derivative().coeffs == pytest.approx(surrogate.coeffs, rel=1e-12)


def test_method5_frozen_coefficients():
    rep = relu_via_derivative(Interval.symmetric(8.0), 2)
    coeffs = list(rep.poly.coeffs) + [0.0] * (4 - len(rep.poly.coeffs))
    assert coeffs[0] == pytest.approx(1.3083668394720465, rel=1e-9)
    assert coeffs[1] == pytest.approx(0.5, rel=1e-9)
    assert coeffs[2] == pytest.approx(0.03869100781244622, rel=1e-9)
    # the cubic term vanishes under the symmetric measure
    assert abs(coeffs[3]) < 1e-12


def test_method5_constant_is_l2_optimal():
    measure = chebyshev_stretched(8.0)
    rep = relu_via_derivative(Interval.symmetric(8.0), 2, measure=measure)
    base = approx.l2_error(relu, rep.poly, measure)
    for shift in (-0.05, 0.05):
        moved = rep.poly + Polynomial((shift,))
        assert approx.l2_error(relu, moved, measure) > base


def test_method5_beats_taylor_replacement_sup():
    """The derivative-integral route must beat the truncated-series route."""
    rep = relu_via_derivative(Interval.symmetric(8.0), 2)
    taylor = relu_taylor_replacement(3)
    xs = np.linspace(-8.0, 8.0, 10001)
    sup_taylor = float(np.max(np.abs(relu(xs) - taylor(xs))))
    assert sup_taylor == pytest.approx(4.693147180559945, rel=1e-9)
    assert rep.sup_error == pytest.approx(1.3083668394720465, rel=1e-9)
    assert rep.sup_error < sup_taylor - 1e-9


def test_modified_relu_route_produces_report():
    rep = modified_relu_report(3)
    assert rep.method is Method.CHEBYSHEV_MODIFIED
    assert rep.poly.degree <= 3
    assert rep.sup_error > 0


def test_sup_error_matches_direct_grid():
    p = Polynomial((0.0, 1.0))
    assert sup_error(relu, p, Interval(-2.0, 2.0), 5) == pytest.approx(2.0)
