import numpy as np
import pytest

from loopdet import reference_device


@pytest.fixture
def ref_params():
    return reference_device()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
