import numpy as np
import pytest

from app.models.types import ObservationRecord
from app.schemas.fusion_config import FusionConfig


@pytest.fixture
def mse_config():
    return FusionConfig(loss="mse", alpha=0.5, **{"lambda": 1.0})


@pytest.fixture
def bce_config():
    return FusionConfig(loss="bce", alpha=0.5, **{"lambda": 1.0})


def random_stream(rng, n, ticks, loss="mse"):
    """Random observations: gaussian targets for MSE, 0/1 labels with probabilities for BCE."""
    observations = []
    for t in range(ticks):
        if loss == "bce":
            y = float(rng.integers(0, 2))
            predictions = rng.uniform(0.0, 1.0, size=n)
        else:
            y = float(rng.normal())
            predictions = rng.normal(size=n)
        observations.append(ObservationRecord(t=t, y=y, predictions=predictions))
    return observations


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_text(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
