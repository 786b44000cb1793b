#!/usr/bin/env python3
"""Compare every ReLU-replacement route on one interval.

Prints sup / L2 errors for: interpolation at sample points, truncated Taylor
(softplus) series, standard Chebyshev projection, modified-weight projection,
and the derivative-integral fit, ordered by sup error.
"""

import argparse
import json

import numpy as np

from henn import approx


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--half-width", type=float, default=8.0)
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--grid", type=int, default=10001)
    ap.add_argument("--out", help="optional JSON output path")
    args = ap.parse_args()

    l, d = args.half_width, args.degree
    interval = approx.Interval.symmetric(l)
    xs = interval.grid(args.grid)
    cheb = approx.chebyshev_stretched(l)

    def errors(poly):
        sup = float(np.max(np.abs(approx.relu(xs) - poly(xs))))
        l2 = approx.l2_error(approx.relu, poly, cheb)
        return sup, l2

    rows = []
    pts = np.linspace(-l, l, d + 1)
    fit = approx.fit_points(list(zip(pts, approx.relu(pts))), d)
    rows.append(("point interpolation", *errors(fit.poly)))
    rows.append(("taylor (softplus)", *errors(approx.relu_taylor_replacement(d))))
    rows.append(
        ("chebyshev projection", *errors(approx.approximate_activation(
            approx.ActivationKind.RELU, d, cheb).poly))
    )
    rows.append(("modified weight", *errors(approx.modified_relu_report(d, l).poly)))
    rows.append(
        ("derivative integral", *errors(approx.relu_via_derivative(
            interval, d - 1, measure=cheb).poly))
    )
    rows.sort(key=lambda r: r[1])

    print(f"ReLU replacements, degree {d} on [-{l}, {l}] ({args.grid}-point grid)")
    print(f"{'method':<24}{'sup error':>12}{'L2 error':>12}")
    for name, sup, l2 in rows:
        print(f"{name:<24}{sup:>12.6f}{l2:>12.6f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(
                [{"method": n, "sup_error": s, "l2_error": e} for n, s, e in rows],
                fh,
                indent=2,
            )


if __name__ == "__main__":
    main()
