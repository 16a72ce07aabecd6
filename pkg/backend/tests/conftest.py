import numpy as np
import pytest

from app.services.quantum_core import schmidt_state
from tests.helpers import chi_mixture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def example_pair():
    """√0.8|00> + √0.2|11> and the q = 0.75 χ mixture: C12 = 0.8, C34 = 0.5"""
    return schmidt_state([0.8, 0.2]), chi_mixture(0.75).density_matrix()
