#!/usr/bin/env python3
"""Per-layer timing of the canonical CNN over one full 8192-slot batch.

Runs encrypt -> per-layer evaluation -> decrypt on the simulator backend and
prints the stage breakdown plus a predictions-per-hour figure.
"""

import argparse
import time

import numpy as np

from henn import he, modelio
from henn.nn import encrypt_tensor, infer_encrypted, infer_plain
from henn.quantize import quantize_model

DEFAULT_P = 562949953423489


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=8192)
    ap.add_argument("--p", type=int, default=DEFAULT_P)
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--fresh-bits", type=float, default=80.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = he.HEParams(
        p=args.p,
        L=args.levels,
        backend="simulator",
        slot_count=args.batch,
        noise=he.NoiseModel(fresh_bits=args.fresh_bits),
    )
    keys = he.keygen(params, b"bench")
    fm = modelio.model1_fixture(args.seed)
    q = modelio.model1_quantization(args.p)
    model = quantize_model(
        fm,
        args.p,
        weight_scale=q["weight_scale"],
        activation_coeff_scale=q["activation_coeff_scale"],
    )
    rng = np.random.default_rng(args.seed)
    batch = rng.integers(0, 256, size=(args.batch, 1, 28, 28))

    t0 = time.perf_counter()
    tensor = encrypt_tensor(keys.public, batch)
    t_encrypt = time.perf_counter() - t0
    rows: list = []
    logits_ct = infer_encrypted(
        model, tensor, params, keys.evaluation, input_range=(0, 255), timings=rows
    )
    t0 = time.perf_counter()
    logits = np.stack(
        [he.decrypt(keys.secret, ct)[: args.batch] for ct in logits_ct], axis=1
    )
    t_decrypt = time.perf_counter() - t0
    total = t_encrypt + sum(dt for _, dt in rows) + t_decrypt

    print(f"batch={args.batch}  backend=simulator  p bits={args.p.bit_length()}")
    print(f"{'stage':<20}{'seconds':>10}")
    print(f"{'encrypt':<20}{t_encrypt:>10.2f}")
    for name, dt in rows:
        print(f"{name:<20}{dt:>10.2f}")
    print(f"{'decrypt':<20}{t_decrypt:>10.2f}")
    print(f"{'total':<20}{total:>10.2f}")
    print(f"throughput: {args.batch / total * 3600:,.0f} predictions/hour")

    ok = (logits[:64] == infer_plain(model, batch[:64])).all()
    print(f"spot check vs plaintext engine (first 64): {'ok' if ok else 'MISMATCH'}")


if __name__ == "__main__":
    main()
