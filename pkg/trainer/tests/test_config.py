import json

import pytest

from henn_trainer.config import (
    DEFAULT_ACTIVATION_COEFFS,
    TrainConfig,
    load_activation_coeffs,
)


def test_defaults_valid():
    cfg = TrainConfig()
    assert cfg.epochs == 5
    assert cfg.batch_size == 64
    assert cfg.lr == 0.01
    assert cfg.momentum == 0.9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"batch_size": 0},
        {"lr": 0.0},
        {"lr": -1.0},
        {"momentum": 1.0},
        {"momentum": -0.1},
        {"subset": 0},
    ],
)
def test_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_default_coeffs_are_the_integrated_sigmoid_fit():
    a0, a1, a2, a3 = DEFAULT_ACTIVATION_COEFFS
    assert a0 == pytest.approx(1.3083668394720465, abs=1e-12)
    assert a1 == 0.5
    assert a2 == pytest.approx(0.03869100781244622, abs=1e-12)
    assert a3 == 0.0


def test_load_coeffs_default_when_no_path():
    assert load_activation_coeffs(None) == DEFAULT_ACTIVATION_COEFFS


def test_load_coeffs_from_flat_report(tmp_path):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps({"coeffs": [1.0, 2.0, 3.0]}))
    assert load_activation_coeffs(str(path)) == (1.0, 2.0, 3.0)


def test_load_coeffs_from_nested_report(tmp_path):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps({"poly": {"coeffs": [0.5, 0.25]}}))
    assert load_activation_coeffs(str(path)) == (0.5, 0.25)


def test_load_coeffs_empty_rejected(tmp_path):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps({"coeffs": []}))
    with pytest.raises(ValueError):
        load_activation_coeffs(str(path))
