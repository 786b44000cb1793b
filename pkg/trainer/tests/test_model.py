import numpy as np
import pytest
import torch

from henn_trainer.config import DEFAULT_ACTIVATION_COEFFS
from henn_trainer.model import Model1, PolyAct, SumPool2d, build_model1


def test_polyact_matches_numpy_polyval():
    coeffs = (1.3, 0.5, 0.04, 0.002)
    act = PolyAct(coeffs)
    x = torch.linspace(-8, 8, 101)
    got = act(x).numpy()
    want = np.polyval(list(reversed(coeffs)), x.numpy())
    assert np.allclose(got, want, atol=1e-5)


def test_sumpool_sums_windows():
    pool = SumPool2d(2)
    x = torch.arange(16, dtype=torch.float32).reshape(1, 1, 4, 4)
    out = pool(x)
    assert out.shape == (1, 1, 2, 2)
    assert torch.allclose(out[0, 0], torch.tensor([[10.0, 18.0], [42.0, 50.0]]))


def test_model1_shape_trace():
    model = build_model1("poly", DEFAULT_ACTIVATION_COEFFS)
    model.eval()
    x = torch.zeros(2, 1, 28, 28)
    assert model(x).shape == (2, 10)
    # intermediate canonical trace
    h = model.conv1(x)
    assert h.shape == (2, 20, 24, 24)
    h = model.pool1(model.bn1(h))
    assert h.shape == (2, 20, 12, 12)
    h = model.conv2(h)
    assert h.shape == (2, 50, 8, 8)
    h = model.pool2(model.bn2(h))
    assert h.shape == (2, 50, 4, 4)


def test_build_model1_activations():
    assert isinstance(build_model1("relu").act, torch.nn.ReLU)
    assert isinstance(build_model1("sigmoid").act, torch.nn.Sigmoid)
    assert isinstance(build_model1("tanh").act, torch.nn.Tanh)
    assert isinstance(build_model1("poly", (1.0, 0.5)).act, PolyAct)


def test_build_model1_rejections():
    with pytest.raises(ValueError):
        build_model1("poly")  # missing coefficients
    with pytest.raises(ValueError):
        build_model1("swish")


def test_parameter_count():
    model = build_model1("relu")
    n = sum(p.numel() for p in model.parameters())
    # conv1 520 + bn1 40 + conv2 25050 + bn2 100 + fc1 205056 + fc2 2570
    assert n == 233336
