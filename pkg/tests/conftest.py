import numpy as np
import pytest

from hdsf.ingest import split
from hdsf.synthetic import planted_low_rank


@pytest.fixture(scope="session")
def small_data():
    """60x60 rank-2 planted matrix, 20% train density."""
    p = planted_low_rank(60, 60, density=0.2, rank=2, noise=0.0, seed=3)
    return split(p.triples(), 0.7, seed=3)


@pytest.fixture(scope="session")
def planted_data():
    p = planted_low_rank(seed=0)
    return split(p.triples(), 0.7, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
