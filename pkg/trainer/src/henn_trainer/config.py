"""Training configuration; everything is pinned so runs are reproducible."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    subset: int | None = None  # cap on training images; None = full split
    activation_report: str | None = None  # JSON from the fitting tool
    data_dir: str | None = None  # directory holding the IDX files

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.subset is not None and self.subset < 1:
            raise ValueError("subset must be >= 1 when given")

    def to_json(self) -> dict:
        return asdict(self)


# The stock degree-3 replacement activation: fit of the sigmoid integrated,
# plus the L2-optimal constant (half-width 8).  Used when no report is given.
DEFAULT_ACTIVATION_COEFFS = (
    1.3083668394720465,
    0.5,
    0.03869100781244622,
    0.0,
)


def load_activation_coeffs(path: str | None) -> tuple[float, ...]:
    """Ascending polynomial coefficients from a fit-report JSON file."""
    if path is None:
        return DEFAULT_ACTIVATION_COEFFS
    obj = json.loads(Path(path).read_text())
    coeffs = obj["coeffs"] if "coeffs" in obj else obj["poly"]["coeffs"]
    if not coeffs:
        raise ValueError(f"activation report {path} has no coefficients")
    return tuple(float(c) for c in coeffs)
