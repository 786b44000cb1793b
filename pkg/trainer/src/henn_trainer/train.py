"""Deterministic CPU training loop for Model 1."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .config import TrainConfig, load_activation_coeffs
from .data import load_digits_28, load_mnist, mnist_dir
from .model import Model1, build_model1

_GRAD_CLIP = 5.0  # the cubic activation can spike gradients early on


@dataclass
class TrainResult:
    model: Model1
    test_accuracy: float
    train_seconds: float
    epochs: int
    dataset: str  # "mnist" or "digits"
    activation: str


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)
    torch.set_num_threads(1)


def load_dataset(config: TrainConfig):
    """-> (train_x, train_y, test_x, test_y, name)."""
    d = mnist_dir(config.data_dir)
    if d is not None:
        tx, ty, vx, vy = load_mnist(d)
        name = "mnist"
    else:
        tx, ty, vx, vy = load_digits_28(config.seed)
        name = "digits"
    if config.subset is not None:
        tx, ty = tx[: config.subset], ty[: config.subset]
    return tx, ty, vx, vy, name


def _to_tensors(x: np.ndarray, y: np.ndarray):
    # pixels enter the network normalized to [0, 1]
    scaled = np.ascontiguousarray(x, dtype=np.float32) / 255.0
    return (
        torch.from_numpy(scaled).unsqueeze(1),
        torch.from_numpy(np.ascontiguousarray(y)),
    )


@torch.no_grad()
def evaluate(model: Model1, x: np.ndarray, y: np.ndarray, batch: int = 256) -> float:
    model.eval()
    tx, ty = _to_tensors(x, y)
    hits = 0
    for i in range(0, len(tx), batch):
        logits = model(tx[i : i + batch])
        hits += int((logits.argmax(1) == ty[i : i + batch]).sum())
    return hits / len(tx)


def train_model1(config: TrainConfig, activation: str = "poly") -> TrainResult:
    _seed_everything(config.seed)
    coeffs = load_activation_coeffs(config.activation_report)
    model = build_model1(activation, coeffs)
    tx, ty, vx, vy, name = load_dataset(config)

    xs, ys = _to_tensors(tx, ty)
    opt = torch.optim.SGD(
        model.parameters(), lr=config.lr, momentum=config.momentum
    )
    loss_fn = torch.nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(config.seed)

    start = time.monotonic()
    model.train()
    for _ in range(config.epochs):
        order = torch.randperm(len(xs), generator=gen)
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(xs[idx]), ys[idx])
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), _GRAD_CLIP)
            opt.step()
    elapsed = time.monotonic() - start

    return TrainResult(
        model=model,
        test_accuracy=evaluate(model, vx, vy),
        train_seconds=elapsed,
        epochs=config.epochs,
        dataset=name,
        activation=activation,
    )


def train_comparison(
    config: TrainConfig, activations=("poly", "relu", "sigmoid", "tanh")
) -> dict[str, TrainResult]:
    """Same schedule and seed per activation; accuracy table at desk scale."""
    return {a: train_model1(config, activation=a) for a in activations}
