"""Scheme parameters shared by both backends."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .._modmath import is_prime
from .errors import ParamError

SIMULATOR = "simulator"
RLWE = "rlwe"

_MAX_SIM_P_BITS = 62  # slot residues must fit the u64 wire format


@dataclass(frozen=True)
class NoiseModel:
    """Deterministic bit charges used by the simulator backend.

    Sums accumulate as balanced trees, so an n-term accumulation costs
    ceil(log2 n) add charges rather than n-1.
    """

    fresh_bits_per_level: float = 6.0
    add_cost: float = 1.0
    mul_plain_cost: float = 3.0
    ct_mul_cost: float = 6.0
    rotate_cost: float = 2.0
    fresh_bits: float | None = None  # overrides fresh_bits_per_level * L

    def fresh_budget(self, levels: int) -> float:
        if self.fresh_bits is not None:
            return float(self.fresh_bits)
        return self.fresh_bits_per_level * levels

    def to_json(self) -> dict:
        return {
            "fresh_bits_per_level": self.fresh_bits_per_level,
            "add_cost": self.add_cost,
            "mul_plain_cost": self.mul_plain_cost,
            "ct_mul_cost": self.ct_mul_cost,
            "rotate_cost": self.rotate_cost,
            "fresh_bits": self.fresh_bits,
        }

    @staticmethod
    def from_json(obj: dict) -> "NoiseModel":
        return NoiseModel(**obj)


@dataclass(frozen=True)
class HEParams:
    """Plaintext modulus, level budget and backend selection.

    k is the claimed security level in bits; it is carried as metadata and
    never validated against a lattice estimator.
    """

    p: int
    L: int
    k: int = 80
    backend: str = SIMULATOR
    n: int = 4096
    slot_count: int | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.backend not in (SIMULATOR, RLWE):
            raise ParamError(f"unknown backend {self.backend!r}")
        if not is_prime(self.p):
            raise ParamError(f"plaintext modulus {self.p} is not prime")
        if self.L < 1:
            raise ParamError("L must be >= 1")
        if self.backend == SIMULATOR:
            if self.p.bit_length() > _MAX_SIM_P_BITS:
                raise ParamError(f"simulator supports p below 2^{_MAX_SIM_P_BITS}")
            if self.slot_count is None:
                object.__setattr__(self, "slot_count", 8192)
        else:
            if self.n < 2 or self.n & (self.n - 1):
                raise ParamError(f"ring degree {self.n} is not a power of two")
            if self.p % (2 * self.n) != 1:
                raise ParamError(
                    f"p={self.p} must satisfy p = 1 (mod 2n = {2 * self.n}) for full slot batching"
                )
            if self.slot_count is None:
                object.__setattr__(self, "slot_count", self.n)
            elif self.slot_count != self.n:
                raise ParamError("rlwe slot_count must equal the ring degree")

    def with_backend(self, backend: str) -> "HEParams":
        return replace(self, backend=backend, slot_count=None)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "L": self.L,
            "k": self.k,
            "n": self.n,
            "slot_count": self.slot_count,
            "backend": self.backend,
            "noise": self.noise.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "HEParams":
        noise = NoiseModel.from_json(obj["noise"]) if "noise" in obj else NoiseModel()
        return HEParams(
            p=int(obj["p"]),
            L=int(obj["L"]),
            k=int(obj.get("k", 80)),
            backend=obj.get("backend", SIMULATOR),
            n=int(obj.get("n", 4096)),
            slot_count=obj.get("slot_count"),
            noise=noise,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @staticmethod
    def load(path) -> "HEParams":
        return HEParams.from_json(json.loads(Path(path).read_text()))
