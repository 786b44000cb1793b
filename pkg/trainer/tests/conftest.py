import numpy as np
import pytest

from henn_trainer.config import TrainConfig
from henn_trainer.export import export_fixtures, export_model
from henn_trainer.prepare import prepare_for_export
from henn_trainer.train import load_dataset, train_model1


@pytest.fixture(scope="session")
def digits_config():
    return TrainConfig(epochs=3, seed=0)


@pytest.fixture(scope="session")
def digits_data(digits_config):
    return load_dataset(digits_config)


@pytest.fixture(scope="session")
def trained(digits_config):
    """One shared training run on the offline digits set."""
    return train_model1(digits_config)


@pytest.fixture(scope="session")
def exported(trained, digits_data, digits_config, tmp_path_factory):
    """Prepared + exported artifacts: (model_path, fixture_path, result)."""
    tx, _, vx, vy, _ = digits_data
    sample = (tx[:256] / 255.0).astype(np.float32)
    prepare_for_export(trained.model, sample)
    out = tmp_path_factory.mktemp("export")
    model_path = export_model(trained.model, out / "model1.json")
    fixture_path = export_fixtures(
        trained.model, vx[:64], vy[:64], out / "fixtures.json", model_path.name
    )
    return model_path, fixture_path, trained
