"""Length-prefixed TCP transport for the encrypted-inference pipeline.

One frame per message:

    magic  "CDL1"   (4 bytes)
    u8     type     (1=PARAMS, 2=PUBKEY, 3=CIPHERBATCH, 4=RESULT, 5=ERROR)
    u32    payload length, big-endian
    payload

A serving endpoint is stateless per connection: it expects PARAMS, PUBKEY
and CIPHERBATCH in that order, evaluates the model it was started with, and
streams one RESULT frame per logit ciphertext before closing.  Anything
malformed gets an ERROR frame and a closed connection, never a crash.

The CIPHERBATCH payload doubles as the on-disk ciphertext-batch format, so
the file pipeline and the TCP pipeline move byte-identical artifacts.
"""

from __future__ import annotations

import json
import socket
import struct
import threading

import numpy as np

from . import he
from .he.errors import HeError
from .he.params import HEParams
from .nn import CipherTensor, InferenceError, ShapeError, infer_encrypted

FRAME_MAGIC = b"CDL1"
MSG_PARAMS = 1
MSG_PUBKEY = 2
MSG_CIPHERBATCH = 3
MSG_RESULT = 4
MSG_ERROR = 5
_VALID_TYPES = frozenset((MSG_PARAMS, MSG_PUBKEY, MSG_CIPHERBATCH, MSG_RESULT, MSG_ERROR))
MAX_PAYLOAD = 1 << 30


class TransportError(Exception):
    pass


class RemoteError(TransportError):
    """The peer answered with an ERROR frame; the message is its payload."""


# ---------------------------------------------------------------------------
# Framing


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if msg_type not in _VALID_TYPES:
        raise TransportError(f"unknown message type {msg_type}")
    if len(payload) > MAX_PAYLOAD:
        raise TransportError(f"payload of {len(payload)} bytes exceeds the limit")
    return FRAME_MAGIC + struct.pack(">BI", msg_type, len(payload)) + payload


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise TransportError(f"connection closed {remaining} bytes early")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_frame(sock: socket.socket, msg_type: int, payload: bytes) -> None:
    sock.sendall(encode_frame(msg_type, payload))


def try_recv_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    """Like recv_frame, but a clean close at a frame boundary returns None."""
    first = sock.recv(1)
    if not first:
        return None
    header = first + _recv_exact(sock, 8)
    return _parse_frame(sock, header)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    header = _recv_exact(sock, 9)
    return _parse_frame(sock, header)


def _parse_frame(sock: socket.socket, header: bytes) -> tuple[int, bytes]:
    if header[:4] != FRAME_MAGIC:
        raise TransportError(f"bad frame magic {header[:4]!r}")
    msg_type, length = struct.unpack(">BI", header[4:])
    if msg_type not in _VALID_TYPES:
        raise TransportError(f"unknown message type {msg_type}")
    if length > MAX_PAYLOAD:
        raise TransportError(f"declared payload of {length} bytes exceeds the limit")
    return msg_type, _recv_exact(sock, length)


# ---------------------------------------------------------------------------
# Ciphertext-batch payload (also the on-disk batch format)


def pack_batch(cts: list, batch: int, shape: tuple[int, ...]) -> bytes:
    """[u32 ct-count][u32 batch][u16 ndim][u32 dim...]  then framed ct blobs."""
    head = struct.pack(">IIH", len(cts), batch, len(shape))
    head += b"".join(struct.pack(">I", d) for d in shape)
    blobs = []
    for ct in cts:
        raw = ct if isinstance(ct, bytes) else he.serialize_ct(ct)
        blobs.append(struct.pack(">I", len(raw)) + raw)
    return head + b"".join(blobs)


def unpack_batch(payload: bytes, params: HEParams):
    """-> (list[Ciphertext], batch, shape); validates every ciphertext."""
    try:
        count, batch, ndim = struct.unpack(">IIH", payload[:10])
        offset = 10
        shape = []
        for _ in range(ndim):
            shape.append(struct.unpack(">I", payload[offset : offset + 4])[0])
            offset += 4
        cts = []
        for _ in range(count):
            (length,) = struct.unpack(">I", payload[offset : offset + 4])
            offset += 4
            cts.append(he.deserialize_ct(payload[offset : offset + length], params))
            offset += length
        if offset != len(payload):
            raise TransportError(f"{len(payload) - offset} trailing bytes in batch")
    except (struct.error, IndexError) as exc:
        raise TransportError(f"truncated ciphertext batch: {exc}") from exc
    except (HeError, ValueError) as exc:
        raise TransportError(f"bad ciphertext in batch: {exc}") from exc
    return cts, batch, tuple(shape)


# ---------------------------------------------------------------------------
# Server


def _drain(sock: socket.socket, limit: int = 1 << 26, timeout: float = 0.2) -> None:
    """Consume whatever the peer is still sending before we reply with an
    ERROR frame.  Closing with unread data makes the kernel reset the
    connection, which can destroy the ERROR frame in flight; stops at EOF,
    a quiet period, or `limit` bytes."""
    try:
        sock.settimeout(timeout)
        seen = 0
        while seen < limit:
            chunk = sock.recv(1 << 20)
            if not chunk:
                break
            seen += len(chunk)
    except OSError:
        pass


def handle_connection(sock: socket.socket, model, input_range=None) -> None:
    """Run one PARAMS -> PUBKEY -> CIPHERBATCH -> RESULT* exchange."""
    try:
        msg, payload = recv_frame(sock)
        if msg != MSG_PARAMS:
            raise TransportError(f"expected PARAMS, got type {msg}")
        try:
            params = HEParams.from_json(json.loads(payload.decode()))
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"bad parameter payload: {exc}") from exc
        if params.p != model.p:
            raise TransportError(f"params p={params.p} does not match the model")

        msg, payload = recv_frame(sock)
        if msg != MSG_PUBKEY:
            raise TransportError(f"expected PUBKEY, got type {msg}")
        try:
            keys = he.deserialize_keys(payload)
        except (HeError, ValueError) as exc:
            raise TransportError(f"bad key payload: {exc}") from exc
        if keys.params != params:
            raise TransportError("key parameters do not match the PARAMS frame")
        if keys.evaluation is None:
            raise TransportError("PUBKEY frame is missing the evaluation key")

        msg, payload = recv_frame(sock)
        if msg != MSG_CIPHERBATCH:
            raise TransportError(f"expected CIPHERBATCH, got type {msg}")
        cts, _, shape = unpack_batch(payload, params)
        if int(np.prod(shape)) != len(cts):
            raise TransportError(f"batch shape {shape} does not cover {len(cts)} cts")

        tensor = CipherTensor(shape, cts)
        logits = infer_encrypted(
            model, tensor, params, keys.evaluation, input_range=input_range
        )
        for ct in logits:
            send_frame(sock, MSG_RESULT, he.serialize_ct(ct))
    except (TransportError, InferenceError, ShapeError, HeError) as exc:
        _drain(sock)
        try:
            send_frame(sock, MSG_ERROR, str(exc).encode())
        except OSError:
            pass
    finally:
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()


class Server:
    """Accept loop around handle_connection; one thread per connection."""

    def __init__(self, model, host: str = "127.0.0.1", port: int = 0, input_range=None):
        self.model = model
        self.input_range = input_range
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self._closing = threading.Event()

    def serve_forever(self, max_connections: int | None = None) -> None:
        served = 0
        while not self._closing.is_set():
            if max_connections is not None and served >= max_connections:
                break
            try:
                conn, _ = self._listener.accept()
            except OSError:
                break
            handle_connection(conn, self.model, self.input_range)
            served += 1

    def start(self, max_connections: int | None = None) -> threading.Thread:
        thread = threading.Thread(
            target=self.serve_forever, args=(max_connections,), daemon=True
        )
        thread.start()
        return thread

    def close(self) -> None:
        self._closing.set()
        self._listener.close()


# ---------------------------------------------------------------------------
# Client


def request_inference(
    host: str,
    port: int,
    params: HEParams,
    key_blob: bytes,
    batch_blob: bytes,
    timeout: float = 60.0,
) -> list[bytes]:
    """Send one job; returns the raw RESULT payloads (serialized logit cts)."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        try:
            send_frame(sock, MSG_PARAMS, json.dumps(params.to_json()).encode())
            send_frame(sock, MSG_PUBKEY, key_blob)
            send_frame(sock, MSG_CIPHERBATCH, batch_blob)
        except (BrokenPipeError, ConnectionResetError):
            pass  # the server may already have rejected; read its verdict below
        results: list[bytes] = []
        while True:
            frame = try_recv_frame(sock)
            if frame is None:
                break  # clean close after the final RESULT
            msg, payload = frame
            if msg == MSG_ERROR:
                raise RemoteError(payload.decode(errors="replace"))
            if msg != MSG_RESULT:
                raise TransportError(f"unexpected frame type {msg} from server")
            results.append(payload)
    if not results:
        raise TransportError("server closed without sending any results")
    return results
