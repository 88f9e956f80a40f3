import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("mhdgn", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("mhdgn")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture(autouse=True)
def _output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MHDGN_OUTPUT", str(tmp_path / "out"))
