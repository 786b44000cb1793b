import copy

import numpy as np
import pytest
import torch

from henn_trainer.config import TrainConfig
from henn_trainer.prepare import (
    LOGIT_BOUND,
    cap_logits,
    prepare_for_export,
    rebalance,
    squarify_activation,
    _folded_conv_weights,
)
from henn_trainer.train import load_dataset, train_model1


@pytest.fixture(scope="module")
def quick():
    cfg = TrainConfig(epochs=1, subset=512, seed=11)
    result = train_model1(cfg)
    _, _, vx, _, _ = load_dataset(cfg)
    sample = (vx[:64] / 255.0).astype(np.float32)
    x = torch.from_numpy(sample).unsqueeze(1)
    return result.model, sample, x


def _logits(model, x):
    model.eval()
    with torch.no_grad():
        return model(x).numpy()


def test_squarify_preserves_function(quick):
    model, _, x = quick
    m = copy.deepcopy(model)
    before = _logits(m, x)
    squarify_activation(m)
    after = _logits(m, x)
    assert list(m.act.coeffs.numpy()[1:]) == [0.0, 1.0]
    assert np.abs(after - before).max() < 1e-3


def test_squarify_rejects_non_quadratic(quick):
    model, _, _ = quick
    m = copy.deepcopy(model)
    m.act.coeffs = torch.tensor([0.0, 1.0], dtype=torch.float32)
    with pytest.raises(ValueError):
        squarify_activation(m)


def test_rebalance_preserves_function_and_equalizes(quick):
    model, _, x = quick
    m = copy.deepcopy(model)
    before = _logits(m, x)
    rebalance(m)
    after = _logits(m, x)
    assert np.abs(after - before).max() < 1e-3
    w1 = _folded_conv_weights(m.conv1, m.bn1)
    w2 = _folded_conv_weights(m.conv2, m.bn2)
    assert np.abs(w1).max() == pytest.approx(np.abs(w2).max(), rel=1e-3)
    n1 = float(m.fc1.weight.detach().abs().max())
    n2 = float(m.fc2.weight.detach().abs().max())
    assert n1 == pytest.approx(n2, rel=1e-3)


def test_cap_logits_bounds_and_keeps_argmax(quick):
    model, sample, x = quick
    m = copy.deepcopy(model)
    before = _logits(m, x)
    lam = cap_logits(m, sample)
    after = _logits(m, x)
    assert 0 < lam <= 1.0
    assert np.abs(after).max() <= LOGIT_BOUND * (1 + 1e-5)
    assert np.array_equal(after.argmax(1), before.argmax(1))
    assert np.allclose(after, before * lam, atol=1e-4)


def test_prepare_for_export_keeps_argmax(quick):
    model, sample, x = quick
    m = copy.deepcopy(model)
    before = _logits(m, x)
    prepare_for_export(m, sample)
    after = _logits(m, x)
    assert np.array_equal(after.argmax(1), before.argmax(1))
    assert np.abs(after).max() <= LOGIT_BOUND * (1 + 1e-4)
