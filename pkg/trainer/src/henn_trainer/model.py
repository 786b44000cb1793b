"""Torch definition of the canonical CNN (Model 1) with swappable activation.

Layer trace on 28x28 inputs: conv 20@5x5 -> BN -> sum-pool 2 -> conv 50@5x5
-> BN -> sum-pool 2 -> activation -> flatten -> dense 256 -> dense 10.
Pooling sums the window (no division) so exported weights carry the exact
semantics of the inference engine's scaled average pooling.  The network is
trained on raw 0-255 pixels; batchnorm absorbs the input statistics, which
keeps the exported input scale at 1.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class SumPool2d(nn.Module):
    """Window sum: avg_pool2d scaled back up by the window area."""

    def __init__(self, window: int = 2):
        super().__init__()
        self.window = window

    def forward(self, x):
        return F.avg_pool2d(x, self.window) * (self.window * self.window)


class PolyAct(nn.Module):
    """Fixed polynomial activation, ascending coefficients (not trained)."""

    def __init__(self, coeffs):
        super().__init__()
        self.register_buffer(
            "coeffs", torch.tensor(list(coeffs), dtype=torch.float32)
        )

    def forward(self, x):
        out = torch.zeros_like(x)
        for c in reversed(self.coeffs):
            out = out * x + c
        return out


class Model1(nn.Module):
    def __init__(self, activation: nn.Module):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 20, 5)
        self.bn1 = nn.BatchNorm2d(20)
        self.pool1 = SumPool2d(2)
        self.conv2 = nn.Conv2d(20, 50, 5)
        self.bn2 = nn.BatchNorm2d(50)
        self.pool2 = SumPool2d(2)
        self.act = activation
        self.fc1 = nn.Linear(800, 256)
        self.fc2 = nn.Linear(256, 10)

    def forward(self, x):
        x = self.pool1(self.bn1(self.conv1(x)))
        x = self.pool2(self.bn2(self.conv2(x)))
        x = self.act(x)
        x = torch.flatten(x, 1)
        return self.fc2(self.fc1(x))


def build_model1(activation: str = "poly", coeffs=None) -> Model1:
    """activation: "poly" (requires coeffs), "relu", "sigmoid" or "tanh"."""
    table = {"relu": nn.ReLU, "sigmoid": nn.Sigmoid, "tanh": nn.Tanh}
    if activation == "poly":
        if coeffs is None:
            raise ValueError("poly activation needs coefficients")
        act = PolyAct(coeffs)
    elif activation in table:
        act = table[activation]()
    else:
        raise ValueError(f"unknown activation {activation!r}")
    return Model1(act)
