import numpy as np
import pytest

from scseg.dct_basis import build_basis, scale_basis
from scseg.segmenter import Block


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20161019)


@pytest.fixture(scope="session")
def basis64():
    return build_basis(64, 10)


@pytest.fixture(scope="session")
def scaled64(basis64):
    return scale_basis(basis64, 0.01)


def smooth_block(basis, coefficients) -> Block:
    """Block that is an exact combination of the leading basis columns."""
    n = basis.n
    weights = np.zeros(basis.k)
    weights[: len(coefficients)] = coefficients
    return Block(pixels=(basis.columns @ weights).reshape(n, n))
