import numpy as np
import pytest

from ticker.decoder import Dictionary
from ticker.model import Alphabet, EngineConfig, Hypers, Params
from ticker.schedule import build_default_schedule


@pytest.fixture(scope="session")
def schedule5():
    return build_default_schedule(5)


@pytest.fixture(scope="session")
def schedule1():
    return build_default_schedule(1)


@pytest.fixture
def default_config():
    return EngineConfig()


@pytest.fixture
def default_hypers():
    return Hypers()


@pytest.fixture
def small_dictionary():
    return Dictionary.from_counts(
        [("is_", 3), ("in_", 1), ("the_", 10), ("hello_", 2), ("world_", 2)]
    )


@pytest.fixture
def tidy_params():
    return Params(delta=0.2, sigma=0.05, lam=0.01, f=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
