"""Command-line operator surface for the encrypted-inference pipeline.

Subcommands cover the full flow: fit an activation polynomial, generate
keys, encrypt a batch, run inference over ciphertexts, decrypt, plus an
end-to-end round trip, a per-layer benchmark, and a TCP client/server pair.

Exit codes: 0 ok, 2 validation, 3 capacity/depth, 4 noise exhausted,
5 transport.  Option precedence: command-line flags, then environment
variables prefixed CDL_, then the JSON config file named by --config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import approx, he, modelio, nn, quantize, transport
from .he.errors import (
    HeError,
    KeyMismatchError,
    LevelExhaustedError,
    NoiseExhaustedError,
    ParamError,
)
from .he.params import RLWE, SIMULATOR, HEParams, NoiseModel
from .modelio import ModelFormatError
from .nn import InferenceError, ShapeError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_NOISE = 4
EXIT_TRANSPORT = 5

ENV_PREFIX = "CDL_"


class CliError(ValueError):
    """Validation failure with an operator-facing message."""


# ---------------------------------------------------------------------------
# Option resolution: flags > environment > config file


class Options:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict = {}
        path = self.get("config", cast=str)
        if path:
            try:
                self.config = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise CliError(f"cannot read config file {path}: {exc}") from exc
            if not isinstance(self.config, dict):
                raise CliError(f"config file {path} must hold a JSON object")

    def get(self, name: str, default=None, cast=None):
        value = getattr(self.args, name.replace("-", "_"), None)
        if value is None:
            env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
            if env is not None:
                value = env
            elif name in self.config:
                value = self.config[name]
        if value is None:
            return default
        if cast is not None:
            try:
                return cast(value)
            except (TypeError, ValueError) as exc:
                raise CliError(f"bad value for --{name}: {value!r}") from exc
        return value

    def require(self, name: str, cast=None):
        value = self.get(name, cast=cast)
        if value is None:
            raise CliError(f"missing required option --{name}")
        return value


def _build_params(opts: Options) -> HEParams:
    """HEParams from --params JSON file, overridden field-wise by flags/env."""
    base: dict = {}
    params_path = opts.get("params", cast=str)
    if params_path:
        try:
            base = json.loads(Path(params_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read params file {params_path}: {exc}") from exc
    p = opts.get("p", cast=int)
    L = opts.get("levels", cast=int)
    backend = opts.get("backend", cast=str)
    n = opts.get("ring-degree", cast=int)
    k = opts.get("security", cast=int)
    fresh = opts.get("fresh-bits", cast=float)
    if p is not None:
        base["p"] = p
    if L is not None:
        base["L"] = L
    if backend is not None:
        base["backend"] = backend
    if n is not None:
        base["n"] = n
    if k is not None:
        base["k"] = k
    if "p" not in base or "L" not in base:
        raise CliError("parameters need at least --p and --levels (or --params)")
    if fresh is not None:
        noise = base.get("noise", {})
        noise["fresh_bits"] = fresh
        base["noise"] = noise
    try:
        return HEParams.from_json(base)
    except (ParamError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"invalid parameters: {exc}") from exc


def _seed_bytes(opts: Options, default: str = "cdl-cli") -> bytes:
    return str(opts.get("seed", default)).encode()


def _load_model(opts: Options) -> modelio.LoadedModel:
    path = opts.require("model", cast=str)
    loaded = modelio.load_model(path)
    if loaded.model is None:
        raise CliError(f"model {path} carries no quantization block")
    return loaded


def _load_batch_input(opts: Options) -> np.ndarray:
    """(B,)+shape integer array from --input (.npy / IDX images)."""
    path = Path(opts.require("input", cast=str))
    if path.suffix == ".npy":
        arr = np.load(path)
    else:
        arr = modelio._read_idx_images(path)
        arr = arr.reshape(arr.shape[0], 1, *arr.shape[1:])
    count = opts.get("count", cast=int)
    if count is not None:
        arr = arr[:count]
    if arr.ndim < 2 or arr.shape[0] == 0:
        raise CliError("input batch is empty")
    return np.asarray(arr)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(opts: Options) -> int:
    kind = approx.ActivationKind(opts.get("activation", "relu"))
    degree = opts.get("degree", 3, cast=int)
    half_width = opts.get("half-width", 8.0, cast=float)
    method = opts.get("method", "derivative")
    measure_name = opts.get("measure", "chebyshev")
    measures = {
        "lebesgue": approx.lebesgue(-half_width, half_width),
        "chebyshev": approx.chebyshev_stretched(half_width),
        "gaussian": approx.gaussian_tail(half_width),
        "modified-relu": approx.modified_relu(half_width),
    }
    if measure_name not in measures:
        raise CliError(f"unknown measure {measure_name!r} (choose from {sorted(measures)})")
    measure = measures[measure_name]
    if method == "derivative":
        if kind is not approx.ActivationKind.RELU:
            raise CliError("the derivative method approximates relu only")
        report = approx.relu_via_derivative(
            approx.Interval.symmetric(half_width), degree - 1, measure=measure
        )
    elif method == "project":
        report = approx.approximate_activation(kind, degree, measure)
    elif method == "modified":
        if kind is not approx.ActivationKind.RELU:
            raise CliError("the modified-measure method approximates relu only")
        report = approx.modified_relu_report(degree, half_width)
    else:
        raise CliError(f"unknown method {method!r} (derivative, project, modified)")
    out = opts.get("out")
    if out:
        report.save(out)
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK


def cmd_keygen(opts: Options) -> int:
    params = _build_params(opts)
    keys = he.keygen(params, _seed_bytes(opts))
    out = Path(opts.require("out", cast=str))
    out.write_bytes(he.serialize_keys(keys))
    public_out = opts.get("public-out", cast=str)
    if public_out:
        Path(public_out).write_bytes(
            he.serialize_keys(keys, parts=("public", "evaluation"))
        )
    print(f"wrote keys for p={params.p} L={params.L} backend={params.backend} to {out}")
    return EXIT_OK


def _load_keys(opts: Options, option: str = "keys") -> he.KeySet:
    path = opts.require(option, cast=str)
    try:
        return he.deserialize_keys(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read key file {path}: {exc}") from exc


def cmd_encrypt(opts: Options) -> int:
    loaded = _load_model(opts)
    model = loaded.model
    keys = _load_keys(opts)
    if keys.public is None:
        raise CliError("key file lacks the public part")
    if keys.params.p != model.p:
        raise CliError(f"key modulus p={keys.params.p} does not match the model")
    batch = _load_batch_input(opts)
    if batch.shape[1:] != model.input_shape:
        raise CliError(f"input shape {batch.shape[1:]} != model {model.input_shape}")
    if batch.shape[0] > keys.params.slot_count:
        raise CliError(
            f"batch of {batch.shape[0]} exceeds slot capacity {keys.params.slot_count}"
        )
    scale = float(loaded.manifest.get("quantization", {}).get("input_scale", 1.0))
    residues = quantize.quantize_tensor(batch, scale, model.p)
    rng = np.random.default_rng(
        int.from_bytes(_seed_bytes(opts), "little") % (1 << 63)
    )
    tensor = nn.encrypt_tensor(keys.public, residues, rng=rng)
    payload = transport.pack_batch(tensor.cts, batch.shape[0], tensor.shape)
    out = Path(opts.require("out", cast=str))
    out.write_bytes(payload)
    print(f"encrypted {batch.shape[0]} inputs into {len(tensor.cts)} ciphertexts -> {out}")
    return EXIT_OK


def _input_range(opts: Options, default=(0.0, 255.0)):
    spec = opts.get("input-range")
    if spec is None:
        return default
    try:
        lo, hi = (float(v) for v in str(spec).split(","))
    except ValueError as exc:
        raise CliError(f"--input-range wants 'lo,hi', got {spec!r}") from exc
    return lo, hi


def cmd_infer(opts: Options) -> int:
    loaded = _load_model(opts)
    model = loaded.model
    keys = _load_keys(opts)
    if keys.evaluation is None:
        raise CliError("key file lacks the evaluation part")
    payload = Path(opts.require("batch", cast=str)).read_bytes()
    cts, batch, shape = transport.unpack_batch(payload, keys.params)
    tensor = nn.CipherTensor(shape, cts)
    t0 = time.time()
    logits = nn.infer_encrypted(
        model, tensor, keys.params, keys.evaluation, input_range=_input_range(opts)
    )
    elapsed = time.time() - t0
    out = Path(opts.require("out", cast=str))
    out.write_bytes(transport.pack_batch(logits, batch, (len(logits),)))
    print(f"evaluated {batch} inputs in {elapsed:.2f}s -> {out}")
    return EXIT_OK


def cmd_decrypt(opts: Options) -> int:
    keys = _load_keys(opts)
    if keys.secret is None:
        raise CliError("key file lacks the secret part")
    payload = Path(opts.require("batch", cast=str)).read_bytes()
    cts, batch, shape = transport.unpack_batch(payload, keys.params)
    rows = [he.decrypt(keys.secret, ct)[:batch] for ct in cts]
    logits = np.stack(rows, axis=1)  # (batch, classes)
    out = opts.get("out", cast=str)
    if out:
        np.save(out, logits)
    labels = nn.predict(logits, keys.params.p)
    print(json.dumps({"batch": batch, "labels": labels.tolist()}))
    return EXIT_OK


def cmd_run_e2e(opts: Options) -> int:
    loaded = _load_model(opts)
    model = loaded.model
    params = _build_params(opts)
    if params.p != model.p:
        raise CliError(f"params p={params.p} does not match the model")
    count = opts.get("count", 64, cast=int)
    if count < 1:
        raise CliError("--count must be at least 1")
    if count > params.slot_count:
        raise CliError(f"--count {count} exceeds slot capacity {params.slot_count}")
    rng = np.random.default_rng(int.from_bytes(_seed_bytes(opts), "little") % (1 << 63))
    if opts.get("input"):
        batch = _load_batch_input(opts)[:count]
    else:
        batch = rng.integers(0, 256, size=(count,) + model.input_shape)
    keys = he.keygen(params, _seed_bytes(opts))
    lo, hi = _input_range(opts)

    t0 = time.time()
    plain = nn.infer(model, batch)
    t_plain = time.time() - t0
    t0 = time.time()
    enc = nn.infer(
        model, batch, params=params, keys=keys, encrypted=True, input_range=(lo, hi)
    )
    t_enc = time.time() - t0
    matches = int((plain == enc).all(axis=1).sum())

    scale_in = float(loaded.manifest.get("quantization", {}).get("input_scale", 1.0))
    scale_out = float(model.metadata.get("output_scale", 1.0))
    oracle = modelio.float_forward(loaded.float_model, batch.astype(np.float64) * 1.0 / scale_in)
    deq = quantize.dequantize(enc, scale_out, model.p)
    agree = float(
        (np.argmax(oracle, axis=1) == nn.predict(enc, model.p)).mean()
    )
    stats = {
        "batch": int(count),
        "encrypted_equals_plain": f"{matches}/{count}",
        "float_argmax_agreement": agree,
        "max_dequantization_error": float(np.abs(deq - oracle).max()),
        "plain_seconds": round(t_plain, 3),
        "encrypted_seconds": round(t_enc, 3),
    }
    print(json.dumps(stats, indent=2))
    return EXIT_OK if matches == count else EXIT_VALIDATION


def cmd_bench(opts: Options) -> int:
    loaded = _load_model(opts)
    model = loaded.model
    params = _build_params(opts)
    if params.p != model.p:
        raise CliError(f"params p={params.p} does not match the model")
    count = opts.get("count", params.slot_count, cast=int)
    if not 1 <= count <= params.slot_count:
        raise CliError(f"--count must be in [1, {params.slot_count}]")
    rng = np.random.default_rng(int.from_bytes(_seed_bytes(opts), "little") % (1 << 63))
    batch = rng.integers(0, 256, size=(count,) + model.input_shape)
    keys = he.keygen(params, _seed_bytes(opts))

    t0 = time.time()
    tensor = nn.encrypt_tensor(keys.public, batch)
    t_encrypt = time.time() - t0

    rows: list = []
    logits = nn.infer_encrypted(
        model,
        tensor,
        params,
        keys.evaluation,
        input_range=(0.0, 255.0),
        timings=rows,
    )

    t0 = time.time()
    for ct in logits:
        he.decrypt(keys.secret, ct)
    t_decrypt = time.time() - t0

    total = t_encrypt + sum(dt for _, dt in rows) + t_decrypt
    width = max(len(name) for name, _ in rows) + 2
    print(f"backend={params.backend}  batch={count}  p bits={params.p.bit_length()}")
    print(f"{'stage'.ljust(width)}seconds")
    print(f"{'encrypt'.ljust(width)}{t_encrypt:8.3f}")
    for name, dt in rows:
        print(f"{name.ljust(width)}{dt:8.3f}")
    print(f"{'decrypt'.ljust(width)}{t_decrypt:8.3f}")
    print(f"{'total'.ljust(width)}{total:8.3f}")
    return EXIT_OK


def cmd_serve(opts: Options) -> int:
    loaded = _load_model(opts)
    host = opts.get("host", "127.0.0.1", cast=str)
    port = opts.get("port", 0, cast=int)
    try:
        server = transport.Server(
            loaded.model, host=host, port=port, input_range=_input_range(opts)
        )
    except OSError as exc:
        raise transport.TransportError(f"cannot bind {host}:{port}: {exc}") from exc
    print(f"serving {opts.get('model')} on {host}:{server.port}", flush=True)
    max_connections = opts.get("max-connections", cast=int)
    try:
        server.serve_forever(max_connections)
    finally:
        server.close()
    return EXIT_OK


def cmd_send(opts: Options) -> int:
    params = _build_params(opts)
    keys_blob = Path(opts.require("keys", cast=str)).read_bytes()
    batch_blob = Path(opts.require("batch", cast=str)).read_bytes()
    host = opts.get("host", "127.0.0.1", cast=str)
    port = opts.require("port", cast=int)
    try:
        results = transport.request_inference(host, port, params, keys_blob, batch_blob)
    except OSError as exc:
        raise transport.TransportError(f"cannot reach {host}:{port}: {exc}") from exc
    _, batch, _ = transport.unpack_batch(batch_blob, params)
    out = Path(opts.require("out", cast=str))
    out.write_bytes(transport.pack_batch(results, batch, (len(results),)))
    print(f"received {len(results)} result ciphertexts -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


def _add_param_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--params", help="JSON parameter file")
    sub.add_argument("--p", type=int, help="plaintext modulus (prime)")
    sub.add_argument("--levels", type=int, help="multiplicative level budget L")
    sub.add_argument("--backend", choices=(SIMULATOR, RLWE))
    sub.add_argument("--ring-degree", type=int, help="ring degree n (rlwe)")
    sub.add_argument("--security", type=int, help="claimed security bits k")
    sub.add_argument("--fresh-bits", type=float, help="simulator fresh noise budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="henn", description="encrypted CNN inference pipeline"
    )
    parser.add_argument("--config", help="JSON config file (lowest precedence)")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("fit", help="fit an activation polynomial")
    s.add_argument("--activation", choices=("relu", "sigmoid", "tanh"))
    s.add_argument("--method", choices=("derivative", "project", "modified"))
    s.add_argument("--degree", type=int)
    s.add_argument("--half-width", type=float)
    s.add_argument("--measure", help="lebesgue | chebyshev | gaussian | modified-relu")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit)

    s = subs.add_parser("keygen", help="generate a key set")
    _add_param_flags(s)
    s.add_argument("--seed")
    s.add_argument("--out", help="full key file (secret+public+evaluation)")
    s.add_argument("--public-out", help="optional public+evaluation key file")
    s.set_defaults(func=cmd_keygen)

    s = subs.add_parser("encrypt", help="encrypt an input batch")
    s.add_argument("--model")
    s.add_argument("--keys")
    s.add_argument("--input", help=".npy batch or IDX images file")
    s.add_argument("--count", type=int)
    s.add_argument("--seed")
    s.add_argument("--out")
    s.set_defaults(func=cmd_encrypt)

    s = subs.add_parser("infer", help="evaluate the model over a ciphertext batch")
    s.add_argument("--model")
    s.add_argument("--keys")
    s.add_argument("--batch")
    s.add_argument("--input-range", help="plaintext input bounds 'lo,hi'")
    s.add_argument("--out")
    s.set_defaults(func=cmd_infer)

    s = subs.add_parser("decrypt", help="decrypt result ciphertexts")
    s.add_argument("--keys")
    s.add_argument("--batch")
    s.add_argument("--out", help="optional .npy for the raw logits")
    s.set_defaults(func=cmd_decrypt)

    s = subs.add_parser("run-e2e", help="full encrypt/evaluate/decrypt round trip")
    _add_param_flags(s)
    s.add_argument("--model")
    s.add_argument("--input")
    s.add_argument("--count", type=int)
    s.add_argument("--seed")
    s.add_argument("--input-range")
    s.set_defaults(func=cmd_run_e2e)

    s = subs.add_parser("bench", help="per-layer timing breakdown")
    _add_param_flags(s)
    s.add_argument("--model")
    s.add_argument("--count", type=int)
    s.add_argument("--seed")
    s.set_defaults(func=cmd_bench)

    s = subs.add_parser("serve", help="serve encrypted inference over TCP")
    s.add_argument("--model")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--input-range")
    s.add_argument("--max-connections", type=int)
    s.set_defaults(func=cmd_serve)

    s = subs.add_parser("send", help="submit a ciphertext batch to a server")
    _add_param_flags(s)
    s.add_argument("--keys", help="public+evaluation key file")
    s.add_argument("--batch")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_send)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args)
        return args.func(opts)
    except (transport.TransportError,) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (NoiseExhaustedError,) as exc:
        print(f"noise exhausted: {exc}", file=sys.stderr)
        return EXIT_NOISE
    except InferenceError as exc:
        print(f"inference error: {exc}", file=sys.stderr)
        return EXIT_NOISE if exc.kind == "noise" else EXIT_CAPACITY
    except (LevelExhaustedError, quantize.CapacityError) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (
        CliError,
        ParamError,
        ShapeError,
        ModelFormatError,
        KeyMismatchError,
        HeError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
