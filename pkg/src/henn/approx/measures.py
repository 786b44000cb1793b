"""Weighted measures on intervals and the quadrature rules that realize them.

The inner product <f, g> = integral of f*g d(mu) drives every basis
construction here.  Each measure family carries its own weight function;
quadrature folds the weight into Gauss-Legendre node weights, with a cosine
substitution for the Chebyshev-type weight so the endpoint singularities never
appear as evaluation points.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateMeasureError(ValueError):
    """Raised when a measure is too concentrated for the requested degree."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def grid(self, n: int) -> np.ndarray:
        if n < 2:
            raise ValueError("grid needs at least 2 points")
        return np.linspace(self.lo, self.hi, n)

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    @staticmethod
    def from_json(obj: dict) -> "Interval":
        return Interval(float(obj["lo"]), float(obj["hi"]))

    @staticmethod
    def symmetric(l: float) -> "Interval":
        if l <= 0:
            raise ValueError("half-width must be positive")
        return Interval(-l, l)


class MeasureFamily(enum.Enum):
    LEBESGUE = "lebesgue"
    CHEBYSHEV_STRETCHED = "chebyshev_stretched"
    GAUSSIAN_TAIL = "gaussian_tail"
    MODIFIED_RELU = "modified_relu"


@dataclass(frozen=True)
class Measure:
    family: MeasureFamily
    interval: Interval
    eps: float = 1e-5  # only used by MODIFIED_RELU

    def weight(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family is MeasureFamily.LEBESGUE:
            return np.ones_like(x)
        if self.family is MeasureFamily.CHEBYSHEV_STRETCHED:
            l = self.half_width
            return 1.0 / (l * np.sqrt(np.maximum(1.0 - (x / l) ** 2, 0.0)))
        if self.family is MeasureFamily.GAUSSIAN_TAIL:
            l = self.half_width
            with np.errstate(divide="ignore"):
                out = np.where(x == 0.0, 0.0, np.exp(-((l / np.where(x == 0.0, 1.0, x)) ** 2)))
            return out
        if self.family is MeasureFamily.MODIFIED_RELU:
            return np.exp(-1.0 / (self.eps + x**2))
        raise AssertionError(self.family)

    @property
    def half_width(self) -> float:
        """Half-width l of a symmetric interval; required by the stretched families."""
        if abs(self.interval.hi + self.interval.lo) > 1e-12 * self.interval.length:
            raise ValueError(f"{self.family.value} requires a symmetric interval")
        return self.interval.hi


def lebesgue(lo: float, hi: float) -> Measure:
    return Measure(MeasureFamily.LEBESGUE, Interval(lo, hi))


def chebyshev_stretched(l: float) -> Measure:
    return Measure(MeasureFamily.CHEBYSHEV_STRETCHED, Interval.symmetric(l))


def gaussian_tail(l: float) -> Measure:
    return Measure(MeasureFamily.GAUSSIAN_TAIL, Interval.symmetric(l))


def modified_relu(l: float, eps: float = 1e-5) -> Measure:
    return Measure(MeasureFamily.MODIFIED_RELU, Interval.symmetric(l), eps=eps)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))

    def __len__(self) -> int:
        return len(self.nodes)


def quadrature_for(measure: Measure, n_nodes: int) -> QuadratureRule:
    """Gauss-Legendre quadrature with the measure's weight folded in.

    The Chebyshev-type weight integrates via x = l*cos(theta), which turns the
    weighted integral into an unweighted one over theta in (0, pi).  The two
    bump-type weights vary sharply near the origin, so they get a composite
    rule on panels geometrically refined toward 0.
    """
    if n_nodes < 2:
        raise ValueError("quadrature needs at least 2 nodes")
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    if measure.family is MeasureFamily.CHEBYSHEV_STRETCHED:
        # substitution x = l cos(theta) turns w(x) dx into d(theta) exactly;
        # split theta at pi/2 so integrands with a kink at x = 0 (ReLU)
        # stay smooth inside each panel
        l = measure.half_width
        nodes, weights = [], []
        for a, b in ((0.0, math.pi / 2.0), (math.pi / 2.0, math.pi)):
            theta = a + (t + 1.0) * (b - a) / 2.0
            nodes.append(l * np.cos(theta))
            weights.append(w * (b - a) / 2.0)
        return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))
    if measure.family in (MeasureFamily.GAUSSIAN_TAIL, MeasureFamily.MODIFIED_RELU):
        return _composite_rule(measure, max(4, min(n_nodes, 48)))
    lo, hi = measure.interval.lo, measure.interval.hi
    edges = [lo, hi] if not lo < 0.0 < hi else [lo, 0.0, hi]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x = a + (t + 1.0) * (b - a) / 2.0
        nodes.append(x)
        weights.append(w * (b - a) / 2.0 * measure.weight(x))
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))


def _composite_rule(measure: Measure, nodes_per_panel: int) -> QuadratureRule:
    l = measure.half_width
    edges = [l * 2.0**-k for k in range(0, 14)]
    edges = sorted({-e for e in edges} | {e for e in edges} | {0.0})
    t, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    all_nodes, all_weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x = a + (t + 1.0) * (b - a) / 2.0
        all_nodes.append(x)
        all_weights.append(w * (b - a) / 2.0 * measure.weight(x))
    return QuadratureRule(np.concatenate(all_nodes), np.concatenate(all_weights))


def inner_product(f, g, measure: Measure, rule: QuadratureRule | None = None) -> float:
    if rule is None:
        rule = quadrature_for(measure, 256)
    fx = np.asarray(f(rule.nodes), dtype=float)
    gx = np.asarray(g(rule.nodes), dtype=float)
    return float(np.dot(rule.weights, fx * gx))
