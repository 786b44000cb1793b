"""Operator CLI: exit codes, option precedence, and the file pipeline."""

import json

import numpy as np
import pytest

from henn import modelio
from henn.cli import main
from henn.quantize import FloatModel, FloatPolyActivation

from conftest import P49


@pytest.fixture()
def workdir(tmp_path):
    """A saved fixture model (degree-2 activation) plus a small input batch."""
    fm = modelio.gen_fixture_model(3)
    model_path = tmp_path / "model.json"
    modelio.save_model(
        model_path,
        fm,
        {"p": P49, "input_scale": 1.0, "weight_scale": 128.0},
    )
    rng = np.random.default_rng(0)
    batch = rng.integers(0, 6, size=(8, 1, 8, 8))
    input_path = tmp_path / "batch.npy"
    np.save(input_path, batch)
    return tmp_path, model_path, input_path, fm, batch


def _keygen(tmp_path, extra=()):
    keys_path = tmp_path / "keys.bin"
    code = main(
        [
            "keygen",
            "--p",
            str(P49),
            "--levels",
            "6",
            "--backend",
            "simulator",
            "--fresh-bits",
            "80",
            "--seed",
            "cli-test",
            "--out",
            str(keys_path),
            *extra,
        ]
    )
    assert code == 0
    return keys_path


# ---------------------------------------------------------------------------
# Happy paths


def test_fit_outputs_coefficients(capsys):
    assert main(["fit", "--method", "derivative", "--degree", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["coeffs"]) == 4
    assert out["l2_error"] >= 0


def test_fit_all_methods_and_measures(capsys, tmp_path):
    cases = [
        ("derivative", "chebyshev", "relu"),
        ("project", "lebesgue", "sigmoid"),
        ("project", "gaussian", "tanh"),
        ("modified", "modified-relu", "relu"),
    ]
    for method, measure, activation in cases:
        code = main(
            [
                "fit",
                "--method",
                method,
                "--measure",
                measure,
                "--activation",
                activation,
                "--degree",
                "3",
                "--out",
                str(tmp_path / f"{method}.json"),
            ]
        )
        assert code == 0, (method, measure)
        assert (tmp_path / f"{method}.json").exists()
    capsys.readouterr()


def test_full_file_pipeline(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    keys_path = _keygen(tmp_path)
    ct_path = tmp_path / "batch.ct"
    out_path = tmp_path / "logits.ct"
    assert (
        main(
            [
                "encrypt",
                "--model",
                str(model_path),
                "--keys",
                str(keys_path),
                "--input",
                str(input_path),
                "--out",
                str(ct_path),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "infer",
                "--model",
                str(model_path),
                "--keys",
                str(keys_path),
                "--batch",
                str(ct_path),
                "--input-range",
                "0,5",
                "--out",
                str(out_path),
            ]
        )
        == 0
    )
    capsys.readouterr()
    assert (
        main(["decrypt", "--keys", str(keys_path), "--batch", str(out_path)]) == 0
    )
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["batch"] == 8
    # labels must match the plaintext engine
    from henn.nn import infer_plain, predict
    from henn.quantize import quantize_model

    model = quantize_model(fm, P49, weight_scale=128.0)
    want = predict(infer_plain(model, batch), P49).tolist()
    assert result["labels"] == want


def test_run_e2e_success(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    code = main(
        [
            "run-e2e",
            "--model",
            str(model_path),
            "--input",
            str(input_path),
            "--count",
            "8",
            "--p",
            str(P49),
            "--levels",
            "6",
            "--fresh-bits",
            "80",
            "--input-range",
            "0,5",
        ]
    )
    stats = json.loads(capsys.readouterr().out)
    assert code == 0
    assert stats["encrypted_equals_plain"] == "8/8"
    assert stats["float_argmax_agreement"] >= 0.9
    assert stats["max_dequantization_error"] < 0.5


def test_bench_prints_per_layer_table(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    code = main(
        [
            "bench",
            "--model",
            str(model_path),
            "--count",
            "8",
            "--p",
            str(P49),
            "--levels",
            "6",
            "--fresh-bits",
            "200",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    for needle in ("encrypt", "0:Conv2d", "2:PolyActivation", "decrypt", "total"):
        assert needle in out


# ---------------------------------------------------------------------------
# Exit codes


def test_exit_2_missing_model(tmp_path, capsys):
    code = main(
        [
            "run-e2e",
            "--model",
            str(tmp_path / "nope.json"),
            "--p",
            str(P49),
            "--levels",
            "6",
        ]
    )
    capsys.readouterr()
    assert code == 2


def test_exit_2_wrong_key(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    keys_path = _keygen(tmp_path)
    other_path = tmp_path / "other.bin"
    assert (
        main(
            [
                "keygen",
                "--p",
                str(P49),
                "--levels",
                "6",
                "--fresh-bits",
                "80",
                "--seed",
                "different",
                "--out",
                str(other_path),
            ]
        )
        == 0
    )
    ct_path = tmp_path / "batch.ct"
    assert (
        main(
            [
                "encrypt",
                "--model",
                str(model_path),
                "--keys",
                str(keys_path),
                "--input",
                str(input_path),
                "--out",
                str(ct_path),
            ]
        )
        == 0
    )
    capsys.readouterr()
    code = main(["decrypt", "--keys", str(other_path), "--batch", str(ct_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_exit_2_bad_config_file(tmp_path, capsys):
    bad = tmp_path / "conf.json"
    bad.write_text("{broken")
    code = main(["--config", str(bad), "fit", "--degree", "3"])
    capsys.readouterr()
    assert code == 2


def test_exit_3_depth_exceeds_levels(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    # degree-3 activation -> depth 2, but only L=1 is granted
    deep = FloatModel(
        layers=fm.layers[:2] + (FloatPolyActivation((0.0, 1.0, 0.0, 0.001)),) + fm.layers[3:],
        input_shape=fm.input_shape,
        class_count=fm.class_count,
    )
    deep_path = tmp_path / "deep.json"
    modelio.save_model(
        deep_path, deep, {"p": P49, "input_scale": 1.0, "weight_scale": 128.0}
    )
    code = main(
        [
            "run-e2e",
            "--model",
            str(deep_path),
            "--input",
            str(input_path),
            "--count",
            "4",
            "--p",
            str(P49),
            "--levels",
            "1",
            "--fresh-bits",
            "80",
            "--input-range",
            "0,5",
        ]
    )
    err = capsys.readouterr().err
    assert code == 3
    assert "depth" in err


def test_exit_4_noise_exhausted(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    code = main(
        [
            "run-e2e",
            "--model",
            str(model_path),
            "--input",
            str(input_path),
            "--count",
            "4",
            "--p",
            str(P49),
            "--levels",
            "6",
            "--fresh-bits",
            "10",
            "--input-range",
            "0,5",
        ]
    )
    err = capsys.readouterr().err
    assert code == 4
    assert "noise" in err


def test_exit_5_connection_refused(workdir, capsys):
    tmp_path, model_path, input_path, fm, batch = workdir
    keys_path = _keygen(tmp_path, extra=["--public-out", str(tmp_path / "pub.bin")])
    ct_path = tmp_path / "batch.ct"
    assert (
        main(
            [
                "encrypt",
                "--model",
                str(model_path),
                "--keys",
                str(keys_path),
                "--input",
                str(input_path),
                "--out",
                str(ct_path),
            ]
        )
        == 0
    )
    capsys.readouterr()
    code = main(
        [
            "send",
            "--keys",
            str(tmp_path / "pub.bin"),
            "--batch",
            str(ct_path),
            "--p",
            str(P49),
            "--levels",
            "6",
            "--fresh-bits",
            "80",
            "--port",
            "1",  # nothing listens on port 1
            "--out",
            str(tmp_path / "res.ct"),
        ]
    )
    capsys.readouterr()
    assert code == 5


# ---------------------------------------------------------------------------
# Option precedence: flags > environment > config file


def _keygen_reported_L(capsys, tmp_path, argv_prefix, extra):
    code = main(
        argv_prefix
        + [
            "keygen",
            "--p",
            str(P49),
            "--fresh-bits",
            "80",
            "--out",
            str(tmp_path / "k.bin"),
            *extra,
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    return int(out.split("L=")[1].split()[0])


def test_option_precedence(workdir, capsys, monkeypatch, tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"levels": 3}))
    prefix = ["--config", str(conf)]

    # config only
    assert _keygen_reported_L(capsys, tmp_path, prefix, []) == 3
    # environment beats config
    monkeypatch.setenv("CDL_LEVELS", "4")
    assert _keygen_reported_L(capsys, tmp_path, prefix, []) == 4
    # flag beats environment
    assert _keygen_reported_L(capsys, tmp_path, prefix, ["--levels", "5"]) == 5


def test_env_backend_selection(workdir, capsys, monkeypatch):
    tmp_path, model_path, input_path, fm, batch = workdir
    monkeypatch.setenv("CDL_BACKEND", "rlwe")
    monkeypatch.setenv("CDL_RING_DEGREE", "64")
    code = main(
        [
            "keygen",
            "--p",
            str(P49),
            "--levels",
            "3",
            "--seed",
            "env",
            "--out",
            str(tmp_path / "rk.bin"),
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "backend=rlwe" in out
