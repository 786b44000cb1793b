#!/usr/bin/env python3
"""Write the canonical 28x28 CNN fixture as a model file plus a sample batch.

Emits model1.json (+ model1.bin weight blob), a random IDX image/label pair,
and the capacity report for the 49-bit default modulus.
"""

import argparse
from pathlib import Path

import numpy as np

from henn import modelio
from henn.quantize import capacity_check, quantize_model

DEFAULT_P = 562949953423489  # smallest 49-bit-plus prime = 1 (mod 128)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="fixtures")
    ap.add_argument("--p", type=int, default=DEFAULT_P)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", type=int, default=64)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm = modelio.model1_fixture(args.seed)
    q = modelio.model1_quantization(args.p)
    path = modelio.save_model(out / "model1.json", fm, q)
    print(f"wrote {path} (+ weight blob)")

    rng = np.random.default_rng(args.seed)
    images = rng.integers(0, 256, size=(args.images, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=args.images, dtype=np.uint8)
    modelio.write_idx(out / "sample-images.idx", out / "sample-labels.idx", images, labels)
    print(f"wrote {args.images} sample images")

    model = quantize_model(
        fm,
        args.p,
        weight_scale=q["weight_scale"],
        activation_coeff_scale=q["activation_coeff_scale"],
    )
    report = capacity_check(model, (0, 255), args.p)
    report.save(out / "capacity.json")
    verdict = "PASS" if report.passed else f"FAIL at {report.failing_layer}"
    print(
        f"capacity for pixels [0,255] at p={args.p}: {verdict} "
        f"(worst bound {report.worst_bound:.3g}, limit {args.p / 2:.3g})"
    )


if __name__ == "__main__":
    main()
