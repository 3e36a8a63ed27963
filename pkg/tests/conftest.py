import numpy as np
import pytest

from scenefactor.generator import GeneratorConfig, generate_scene


@pytest.fixture(scope="session")
def scene_batch():
    """A small pool of generated scenes shared by read-only tests."""
    return [generate_scene(GeneratorConfig(seed=100 + i)) for i in range(6)]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
