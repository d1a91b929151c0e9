import pytest

from ftprep.config import load_config
from ftprep.noisemodels import NoiseConfig
from ftprep.simcore import set_debug


@pytest.fixture(autouse=True)
def debug_checks():
    set_debug(True)
    yield
    set_debug(False)


@pytest.fixture
def ideal_noise():
    return NoiseConfig.ideal()


@pytest.fixture
def device_config():
    return load_config()

