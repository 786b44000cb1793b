"""Unified HE interface: both backends must agree with plain Z_p evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from henn import he
from henn._modmath import horner_mod, modmul_elements
from henn.he.errors import (
    BackendMismatchError,
    HeError,
    LevelExhaustedError,
)

from conftest import P49


@pytest.fixture(scope="module")
def sim_keys(request):
    params = he.HEParams(p=P49, L=6, backend="simulator", slot_count=64)
    return params, he.keygen(params, b"api-sim")


@pytest.fixture(scope="module")
def rlwe_keys():
    params = he.HEParams(p=P49, L=3, n=64, backend="rlwe")
    return params, he.keygen(params, b"api-rlwe")


def both(request_sim, request_rlwe):
    return [request_sim, request_rlwe]


@pytest.fixture(scope="module", params=["simulator", "rlwe"])
def backend_keys(request, sim_keys, rlwe_keys):
    return sim_keys if request.param == "simulator" else rlwe_keys


def test_encrypt_validates_slots(backend_keys):
    params, keys = backend_keys
    with pytest.raises(ValueError):
        he.encrypt(keys.public, np.zeros((2, 2), dtype=np.int64))
    with pytest.raises(ValueError):
        he.encrypt(keys.public, np.zeros(65, dtype=np.int64))
    with pytest.raises(ValueError):
        he.encrypt(keys.public, np.array([-1]))
    with pytest.raises(ValueError):
        he.encrypt(keys.public, np.array([params.p]))


def test_round_trip_pads_with_zeros(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=10)
    ct = he.encrypt(keys.public, x, rng=rng)
    got = he.decrypt(keys.secret, ct)
    assert got.shape == (64,)
    assert (got[:10] == x).all() and (got[10:] == 0).all()


def test_add_mul_agree_with_plain(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=64)
    y = rng.integers(0, params.p, size=64)
    cx = he.encrypt(keys.public, x, rng=rng)
    cy = he.encrypt(keys.public, y, rng=rng)
    assert (he.decrypt(keys.secret, he.add(cx, cy)) == (x + y) % params.p).all()
    assert (
        he.decrypt(keys.secret, he.add_plain(cx, y)) == (x + y) % params.p
    ).all()
    assert (
        he.decrypt(keys.secret, he.mul(cx, cy, keys.evaluation))
        == modmul_elements(x, y, params.p)
    ).all()
    assert (
        he.decrypt(keys.secret, he.mul_plain(cx, 7)) == 7 * x % params.p
    ).all()
    assert (
        he.decrypt(keys.secret, he.mul_plain(cx, y))
        == modmul_elements(x, y, params.p)
    ).all()


def test_mul_plain_negative_scalar(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    got = he.decrypt(keys.secret, he.mul_plain(ct, -3))
    assert (got == (-3 * x) % params.p).all()


def test_level_tracking_and_exhaustion(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, 100, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    assert ct.level == params.L
    for _ in range(params.L):
        ct = he.mul(ct, ct, keys.evaluation)
    assert ct.level == 0
    with pytest.raises(LevelExhaustedError):
        he.mul(ct, ct, keys.evaluation)


def test_rotate_simulator_only(sim_keys, rlwe_keys, rng):
    params, keys = sim_keys
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x)
    assert (he.decrypt(keys.secret, he.rotate(ct, 5)) == np.roll(x, -5)).all()
    rparams, rkeys = rlwe_keys
    rct = he.encrypt(rkeys.public, x, rng=rng)
    with pytest.raises(HeError):
        he.rotate(rct, 1)


def test_backend_mismatch_rejected(sim_keys, rlwe_keys, rng):
    _, skeys = sim_keys
    _, rkeys = rlwe_keys
    a = he.encrypt(skeys.public, np.arange(8))
    b = he.encrypt(rkeys.public, np.arange(8), rng=rng)
    with pytest.raises(BackendMismatchError):
        he.add(a, b)


def test_poly_depth_values():
    assert he.poly_depth(0) == 0
    assert he.poly_depth(1) == 1
    assert he.poly_depth(2) == 1
    assert he.poly_depth(3) == 2
    assert he.poly_depth(4) == 2
    assert he.poly_depth(8) == 3


@pytest.mark.parametrize(
    "coeffs",
    [
        [5],
        [0, 1],
        [3, 2, 1],
        [1, 0, 0, 4],
        [7, 1, 2, 3, 4, 5, 6, 7, 1],  # degree 8, depth 3
    ],
)
def test_eval_poly_matches_horner(backend_keys, coeffs, rng):
    params, keys = backend_keys
    if he.poly_depth(len(coeffs) - 1) > params.L:
        pytest.skip("degree exceeds this backend's test level budget")
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    out = he.eval_poly_ct(ct, coeffs, keys.evaluation)
    assert (he.decrypt(keys.secret, out) == horner_mod(coeffs, x, params.p)).all()


def test_eval_poly_trims_trailing_zero_coeffs(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    out = he.eval_poly_ct(ct, [1, 2, 0, 0], keys.evaluation)
    assert out.level == params.L  # no ct*ct consumed for a linear poly
    assert (he.decrypt(keys.secret, out) == (1 + 2 * x) % params.p).all()


def test_eval_poly_depth_exceeds_level(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    for _ in range(params.L):
        ct = he.mul(ct, ct, keys.evaluation)
    with pytest.raises(LevelExhaustedError):
        he.eval_poly_ct(ct, [1, 1, 1], keys.evaluation)


def test_eval_poly_many_matches_per_ct(backend_keys, rng):
    params, keys = backend_keys
    coeffs = [3, 1, 4, 1]
    xs = [rng.integers(0, params.p, size=64) for _ in range(5)]
    cts = [he.encrypt(keys.public, x, rng=rng) for x in xs]
    outs = he.eval_poly_many(cts, coeffs, keys.evaluation)
    for out, x in zip(outs, xs):
        assert (
            he.decrypt(keys.secret, out) == horner_mod(coeffs, x, params.p)
        ).all()


def test_linear_combine_matches_matrix_product(backend_keys, rng):
    params, keys = backend_keys
    xs = [rng.integers(0, params.p, size=64) for _ in range(6)]
    cts = [he.encrypt(keys.public, x, rng=rng) for x in xs]
    weights = rng.integers(-50, 51, size=(3, 6))
    bias = rng.integers(0, params.p, size=3)
    outs = he.linear_combine(cts, weights, bias)
    stacked = np.stack(xs).astype(object)
    want = (weights.astype(object) @ stacked + bias[:, None].astype(object)) % params.p
    for row, out in zip(want, outs):
        assert (he.decrypt(keys.secret, out).astype(object) == row).all()


def test_noise_budget_decreases(backend_keys, rng):
    params, keys = backend_keys
    x = rng.integers(0, params.p, size=64)
    ct = he.encrypt(keys.public, x, rng=rng)
    fresh = he.noise_budget(ct)
    after = he.noise_budget(he.mul(ct, ct, keys.evaluation))
    assert after < fresh
    assert he.measured_noise_budget(keys.secret, ct) > 0


@given(data=st.data())
@settings(max_examples=25, deadline=None)
def test_random_circuits_property(data):
    """Random add/mul_plain/add_plain chains agree with plain evaluation."""
    params = he.HEParams(p=P49, L=3, n=64, backend="rlwe")
    keys = he.keygen(params, b"prop")
    x = np.array(
        data.draw(st.lists(st.integers(0, P49 - 1), min_size=64, max_size=64))
    )
    ct = he.encrypt(keys.public, x, rng=np.random.default_rng(0))
    ref = x.copy()
    for _ in range(data.draw(st.integers(0, 4))):
        op = data.draw(st.sampled_from(["add", "add_plain", "mul_plain"]))
        if op == "add":
            ct = he.add(ct, ct)
            ref = 2 * ref % P49
        elif op == "add_plain":
            c = data.draw(st.integers(0, P49 - 1))
            ct = he.add_plain(ct, np.full(64, c))
            ref = (ref + c) % P49
        else:
            w = data.draw(st.integers(-1000, 1000))
            ct = he.mul_plain(ct, w)
            ref = w * ref % P49
    assert (he.decrypt(keys.secret, ct) == ref).all()
