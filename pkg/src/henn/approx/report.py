"""Approximation result record and its JSON form (the activation payload)."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .measures import Interval
from .poly import Polynomial


class Method(enum.Enum):
    POINT_FIT = "point_fit"
    TAYLOR = "taylor"
    CHEBYSHEV_STD = "chebyshev_std"
    CHEBYSHEV_MODIFIED = "chebyshev_modified"
    DERIVATIVE_INTEGRAL = "derivative_integral"


@dataclass(frozen=True)
class ApproxReport:
    poly: Polynomial
    sup_error: float
    l2_error: float
    method: Method
    interval: Interval

    def __post_init__(self):
        for name in ("sup_error", "l2_error"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "interval": self.interval.to_json(),
            "coeffs": list(self.poly.coeffs),
            "sup_error": self.sup_error,
            "l2_error": self.l2_error,
        }

    @staticmethod
    def from_json(obj: dict) -> "ApproxReport":
        return ApproxReport(
            poly=Polynomial(tuple(obj["coeffs"])),
            sup_error=float(obj["sup_error"]),
            l2_error=float(obj["l2_error"]),
            method=Method(obj["method"]),
            interval=Interval.from_json(obj["interval"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @staticmethod
    def load(path) -> "ApproxReport":
        return ApproxReport.from_json(json.loads(Path(path).read_text()))
