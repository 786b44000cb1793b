"""Dense real polynomials in the monomial basis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Polynomial:
    """Coefficients ascending in degree: coeffs[k] multiplies x**k.

    Trailing (near-)zero coefficients are trimmed at construction, so
    degree == len(coeffs) - 1 and the empty polynomial is the zero function.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = list(self.coeffs)
        while c and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        """Horner evaluation; broadcasts over numpy arrays."""
        acc = np.zeros_like(np.asarray(x, dtype=float))
        for c in reversed(self.coeffs):
            acc = acc * x + c
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(acc)
        return acc

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return Polynomial(tuple(a))

    def __mul__(self, scalar: float) -> "Polynomial":
        return Polynomial(tuple(c * scalar for c in self.coeffs))

    __rmul__ = __mul__

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (other * -1.0)

    def derivative(self) -> "Polynomial":
        return Polynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def antiderivative(self, constant: float = 0.0) -> "Polynomial":
        return Polynomial((constant,) + tuple(c / (k + 1) for k, c in enumerate(self.coeffs)))

    @staticmethod
    def product(a: "Polynomial", b: "Polynomial") -> "Polynomial":
        if not a.coeffs or not b.coeffs:
            return Polynomial(())
        return Polynomial(tuple(np.convolve(a.coeffs, b.coeffs)))

    @staticmethod
    def monomial(k: int) -> "Polynomial":
        return Polynomial((0.0,) * k + (1.0,))


def eval_poly_real(p: Polynomial, x) -> float:
    """Horner evaluation of p at x (module-level alias)."""
    return p(x)


def from_coeffs(coeffs: Iterable[float]) -> Polynomial:
    return Polynomial(tuple(coeffs))
