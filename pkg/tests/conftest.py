import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def unit_rows():
    def make(n, m, seed=0):
        r = np.random.Generator(np.random.PCG64(seed))
        v = r.standard_normal((n, m))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    return make
