import numpy as np
import pytest
from scipy.stats import unitary_group

from lossysim import rng


def haar(m, seed):
    if m == 1:
        return np.eye(1, dtype=complex)
    return unitary_group.rvs(m, random_state=rng.stream(seed))


HOM = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@pytest.fixture
def hom():
    return HOM.copy()
