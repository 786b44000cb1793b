"""Shared fixtures: reference primes and parameter sets for both backends."""

import numpy as np
import pytest
from hypothesis import settings

from henn._modmath import next_prime_congruent
from henn.he import HEParams, NoiseModel

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")

# 1 (mod 2n) for every ring degree used in tests, so one prime serves both
# backends; 17-bit and 49-bit sizes bracket the capacity regimes
P17 = next_prime_congruent(1 << 17, 1, 2 * 64)
P49 = next_prime_congruent(1 << 49, 1, 2 * 64)


@pytest.fixture(scope="session")
def p17() -> int:
    return P17


@pytest.fixture(scope="session")
def p49() -> int:
    return P49


@pytest.fixture(scope="session")
def sim_params() -> HEParams:
    return HEParams(p=P49, L=6, backend="simulator", slot_count=64)


@pytest.fixture(scope="session")
def rlwe_params() -> HEParams:
    return HEParams(p=P49, L=3, n=64, backend="rlwe")


@pytest.fixture(scope="session")
def pipeline_sim_params() -> HEParams:
    """Simulator parameters sized for whole-model inference."""
    return HEParams(
        p=P49, L=6, backend="simulator", noise=NoiseModel(fresh_bits=80.0)
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)
