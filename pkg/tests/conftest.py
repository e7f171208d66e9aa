import numpy as np
import pytest

from georay.metric import builtin_metric

LENS = {"amplitude": 0.5, "width": 1.0}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def flat():
    return builtin_metric("euclidean", {"dim": 2})


@pytest.fixture(scope="session")
def halfplane():
    return builtin_metric("poincare_half_plane")


@pytest.fixture(scope="session")
def sphere():
    return builtin_metric("sphere")


@pytest.fixture(scope="session")
def lens():
    return builtin_metric("isotropic_index", LENS)


def write_grid(path, header, values):
    path.write_text(header + "\n" + " ".join(str(v) for v in values) + "\n")
    return path
