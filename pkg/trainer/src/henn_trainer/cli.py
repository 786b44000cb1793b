"""Command line entry point: train Model 1 and export the model + fixtures."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .export import DEFAULT_P, export_fixtures, export_model
from .prepare import prepare_for_export
from .train import load_dataset, train_comparison, train_model1


def _add_train_flags(sub):
    sub.add_argument("--epochs", type=int, default=5)
    sub.add_argument("--batch-size", type=int, default=64)
    sub.add_argument("--lr", type=float, default=0.01)
    sub.add_argument("--momentum", type=float, default=0.9)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--subset", type=int, default=None, help="cap on training images")
    sub.add_argument("--data-dir", default=None, help="directory with MNIST IDX files")
    sub.add_argument(
        "--activation-report", default=None, help="fit-report JSON with coefficients"
    )


def _config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        subset=args.subset,
        activation_report=args.activation_report,
        data_dir=args.data_dir,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="henn-train")
    subs = parser.add_subparsers(dest="command", required=True)

    tr = subs.add_parser("train", help="train Model 1 and export model + fixtures")
    _add_train_flags(tr)
    tr.add_argument("--out", default="model1.json", help="manifest output path")
    tr.add_argument("--fixtures", default=None, help="fixture JSON output path")
    tr.add_argument("--fixture-count", type=int, default=8)
    tr.add_argument("--p", type=int, default=DEFAULT_P)

    cmp_ = subs.add_parser("compare", help="accuracy table across activations")
    _add_train_flags(cmp_)
    cmp_.add_argument(
        "--activations", default="poly,relu,sigmoid,tanh", help="comma-separated list"
    )

    args = parser.parse_args(argv)
    try:
        config = _config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "train":
        result = train_model1(config)
        tx, _, vx, vy, _ = load_dataset(config)
        sample = (tx[:256] / 255.0).astype(np.float32)
        prepare_for_export(result.model, sample)
        out = export_model(result.model, Path(args.out), p=args.p)
        report = {
            "dataset": result.dataset,
            "test_accuracy": result.test_accuracy,
            "train_seconds": round(result.train_seconds, 2),
            "model_file": str(out),
        }
        if args.fixtures:
            n = min(args.fixture_count, len(vx))
            fx = export_fixtures(
                result.model, vx[:n], vy[:n], args.fixtures, out.name
            )
            report["fixture_file"] = str(fx)
        print(json.dumps(report, indent=1))
        return 0

    if args.command == "compare":
        names = [a.strip() for a in args.activations.split(",") if a.strip()]
        results = train_comparison(config, names)
        table = {
            name: {
                "test_accuracy": res.test_accuracy,
                "train_seconds": round(res.train_seconds, 2),
                "dataset": res.dataset,
            }
            for name, res in results.items()
        }
        print(json.dumps(table, indent=1))
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
