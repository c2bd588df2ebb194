import numpy as np
import pytest

from facekit import data
from facekit.cascade import load_cascade
from facekit.imgcore import load_pgm


@pytest.fixture(scope="session")
def haar():
    return load_cascade(data.path(data.HAAR_FRONTALFACE))


@pytest.fixture(scope="session")
def lbp():
    return load_cascade(data.path(data.LBP_FRONTALFACE))


@pytest.fixture(scope="session")
def eye():
    return load_cascade(data.path(data.HAAR_EYE))


@pytest.fixture(scope="session")
def astronaut():
    return load_pgm(data.path("images/astronaut.pgm"))


@pytest.fixture(scope="session")
def hopper():
    return load_pgm(data.path("images/hopper.pgm"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
