"""TCP framing, batch payloads, and the serve/request exchange."""

import json
import socket
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from henn import he, modelio, transport
from henn.nn import encrypt_tensor, infer_plain, predict
from henn.quantize import quantize_model
from henn.transport import (
    FRAME_MAGIC,
    MSG_CIPHERBATCH,
    MSG_ERROR,
    MSG_PARAMS,
    MSG_PUBKEY,
    MSG_RESULT,
    RemoteError,
    Server,
    TransportError,
    encode_frame,
    pack_batch,
    recv_frame,
    request_inference,
    send_frame,
    unpack_batch,
)

from conftest import P49

PARAMS = he.HEParams(
    p=P49, L=6, backend="simulator", slot_count=64, noise=he.NoiseModel(fresh_bits=80.0)
)


@pytest.fixture(scope="module")
def setup():
    keys = he.keygen(PARAMS, b"transport")
    fm = modelio.gen_fixture_model(3)
    model = quantize_model(fm, P49, weight_scale=2.0**7)
    return keys, model


def _socketpair():
    return socket.socketpair()


# ---------------------------------------------------------------------------
# Framing


def test_frame_round_trip():
    a, b = _socketpair()
    with a, b:
        send_frame(a, MSG_PARAMS, b"hello")
        msg, payload = recv_frame(b)
        assert msg == MSG_PARAMS and payload == b"hello"


def test_frame_empty_payload():
    a, b = _socketpair()
    with a, b:
        send_frame(a, MSG_RESULT, b"")
        assert recv_frame(b) == (MSG_RESULT, b"")


def test_encode_frame_layout():
    frame = encode_frame(MSG_ERROR, b"xy")
    assert frame[:4] == FRAME_MAGIC
    assert frame[4] == MSG_ERROR
    assert struct.unpack(">I", frame[5:9])[0] == 2
    assert frame[9:] == b"xy"


def test_encode_frame_rejects_bad_type_and_oversize():
    with pytest.raises(TransportError):
        encode_frame(42, b"")
    huge = bytearray(1)

    class FakeLen(bytes):
        def __len__(self):
            return transport.MAX_PAYLOAD + 1

    with pytest.raises(TransportError):
        encode_frame(MSG_PARAMS, FakeLen(huge))


def test_recv_frame_bad_magic():
    a, b = _socketpair()
    with a, b:
        a.sendall(b"WRONGx" + b"\x00" * 3)
        with pytest.raises(TransportError):
            recv_frame(b)


def test_recv_frame_unknown_type():
    a, b = _socketpair()
    with a, b:
        a.sendall(FRAME_MAGIC + struct.pack(">BI", 99, 0))
        with pytest.raises(TransportError):
            recv_frame(b)


def test_recv_frame_oversized_declared_length():
    a, b = _socketpair()
    with a, b:
        a.sendall(FRAME_MAGIC + struct.pack(">BI", MSG_PARAMS, transport.MAX_PAYLOAD + 1))
        with pytest.raises(TransportError):
            recv_frame(b)


def test_recv_frame_truncated_payload():
    a, b = _socketpair()
    with b:
        a.sendall(FRAME_MAGIC + struct.pack(">BI", MSG_PARAMS, 100) + b"short")
        a.close()
        with pytest.raises(TransportError):
            recv_frame(b)


def test_try_recv_frame_clean_close():
    a, b = _socketpair()
    with b:
        a.close()
        assert transport.try_recv_frame(b) is None


# ---------------------------------------------------------------------------
# Batch payloads


def test_pack_unpack_batch_round_trip(setup, rng):
    keys, model = setup
    xs = [rng.integers(0, P49, size=64) for _ in range(6)]
    cts = [he.encrypt(keys.public, x) for x in xs]
    blob = pack_batch(cts, batch=64, shape=(2, 3))
    back, batch, shape = unpack_batch(blob, PARAMS)
    assert batch == 64 and shape == (2, 3) and len(back) == 6
    for ct, x in zip(back, xs):
        assert (he.decrypt(keys.secret, ct) == x).all()


def test_pack_batch_accepts_raw_bytes(setup):
    keys, model = setup
    ct = he.encrypt(keys.public, np.arange(64) % P49)
    raw = he.serialize_ct(ct)
    assert pack_batch([raw], 64, (1,)) == pack_batch([ct], 64, (1,))


def test_unpack_batch_trailing_garbage(setup):
    keys, model = setup
    ct = he.encrypt(keys.public, np.arange(64) % P49)
    blob = pack_batch([ct], 64, (1,)) + b"\x00"
    with pytest.raises(TransportError):
        unpack_batch(blob, PARAMS)


def test_unpack_batch_truncated(setup):
    keys, model = setup
    ct = he.encrypt(keys.public, np.arange(64) % P49)
    blob = pack_batch([ct], 64, (1,))
    with pytest.raises(TransportError):
        unpack_batch(blob[: len(blob) // 2], PARAMS)


@given(data=st.binary(min_size=0, max_size=300))
@settings(max_examples=300, deadline=None)
def test_unpack_batch_fuzz_never_crashes(data):
    try:
        unpack_batch(data, PARAMS)
    except TransportError:
        pass


# ---------------------------------------------------------------------------
# End-to-end exchange


def _client_blobs(keys, model, batch):
    tensor = encrypt_tensor(keys.public, batch)
    key_blob = he.serialize_keys(keys, parts=("public", "evaluation"))
    batch_blob = pack_batch(tensor.cts, len(batch), tensor.shape)
    return key_blob, batch_blob


def test_serve_request_round_trip(setup, rng):
    keys, model = setup
    batch = rng.integers(0, 6, size=(8, 1, 8, 8))
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=1)
    try:
        key_blob, batch_blob = _client_blobs(keys, model, batch)
        payloads = request_inference("127.0.0.1", server.port, PARAMS, key_blob, batch_blob)
    finally:
        server.close()
    logits = np.stack(
        [he.decrypt(keys.secret, he.deserialize_ct(p, PARAMS))[:8] for p in payloads],
        axis=1,
    )
    assert (logits == infer_plain(model, batch)).all()


def test_server_handles_multiple_connections(setup, rng):
    keys, model = setup
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=3)
    try:
        for _ in range(3):
            batch = rng.integers(0, 6, size=(4, 1, 8, 8))
            key_blob, batch_blob = _client_blobs(keys, model, batch)
            payloads = request_inference(
                "127.0.0.1", server.port, PARAMS, key_blob, batch_blob
            )
            assert len(payloads) == model.class_count
    finally:
        server.close()


def test_server_rejects_wrong_p(setup, rng):
    keys, model = setup
    wrong = he.HEParams(p=65537, L=6, backend="simulator", slot_count=64)
    wkeys = he.keygen(wrong, b"wrong-p")
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=1)
    try:
        batch = rng.integers(0, 6, size=(2, 1, 8, 8))
        tensor = encrypt_tensor(wkeys.public, batch)
        with pytest.raises(RemoteError, match="does not match the model"):
            request_inference(
                "127.0.0.1",
                server.port,
                wrong,
                he.serialize_keys(wkeys, parts=("public", "evaluation")),
                pack_batch(tensor.cts, 2, tensor.shape),
            )
    finally:
        server.close()


def test_server_rejects_missing_evaluation_key(setup, rng):
    # simulator key files always carry the (trivial) evaluation key, so this
    # guard only bites on the rlwe backend, whose evk is real key material
    _, model = setup
    rparams = he.HEParams(p=P49, L=3, n=64, backend="rlwe")
    rkeys = he.keygen(rparams, b"rlwe-noevk")
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=1)
    try:
        batch = rng.integers(0, 6, size=(2, 1, 8, 8))
        tensor = encrypt_tensor(rkeys.public, batch, rng=rng)
        with pytest.raises(RemoteError, match="evaluation key"):
            request_inference(
                "127.0.0.1",
                server.port,
                rparams,
                he.serialize_keys(rkeys, parts=("public",)),
                pack_batch(tensor.cts, 2, tensor.shape),
            )
    finally:
        server.close()


def test_server_rejects_out_of_order_frames(setup):
    keys, model = setup
    server = Server(model)
    server.start(max_connections=1)
    try:
        with socket.create_connection(("127.0.0.1", server.port), timeout=10) as sock:
            send_frame(sock, MSG_PUBKEY, b"")  # PARAMS expected first
            msg, payload = recv_frame(sock)
            assert msg == MSG_ERROR
            assert b"PARAMS" in payload
    finally:
        server.close()


def test_server_rejects_malformed_params(setup):
    keys, model = setup
    server = Server(model)
    server.start(max_connections=1)
    try:
        with socket.create_connection(("127.0.0.1", server.port), timeout=10) as sock:
            send_frame(sock, MSG_PARAMS, b"this is not json")
            msg, _ = recv_frame(sock)
            assert msg == MSG_ERROR
    finally:
        server.close()


def test_server_rejects_shape_ct_mismatch(setup, rng):
    keys, model = setup
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=1)
    try:
        batch = rng.integers(0, 6, size=(2, 1, 8, 8))
        tensor = encrypt_tensor(keys.public, batch)
        bad_blob = pack_batch(tensor.cts[:-1], 2, tensor.shape)  # one ct short
        with pytest.raises(RemoteError):
            request_inference(
                "127.0.0.1",
                server.port,
                PARAMS,
                he.serialize_keys(keys, parts=("public", "evaluation")),
                bad_blob,
            )
    finally:
        server.close()


def test_server_survives_garbage_then_serves(setup, rng):
    """A connection spraying random bytes must not take the server down."""
    keys, model = setup
    server = Server(model, input_range=(0, 5))
    server.start(max_connections=2)
    try:
        with socket.create_connection(("127.0.0.1", server.port), timeout=10) as sock:
            sock.sendall(b"\xff" * 64)
        batch = rng.integers(0, 6, size=(2, 1, 8, 8))
        key_blob, batch_blob = _client_blobs(keys, model, batch)
        payloads = request_inference(
            "127.0.0.1", server.port, PARAMS, key_blob, batch_blob
        )
        assert len(payloads) == model.class_count
    finally:
        server.close()
