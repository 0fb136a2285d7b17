from pathlib import Path

import numpy as np
import pytest

from strataforms import meshes


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def square():
    return meshes.unit_square()


@pytest.fixture
def split_square():
    return meshes.split_square()


@pytest.fixture
def quad():
    return meshes.quad_catalogue()


@pytest.fixture
def projects_dir():
    return Path(__file__).parent / "projects"
