import numpy as np
import pytest

from fare.data import LabeledSet


def random_labeled(rng, n, d=2, nonuniform=False, all_cells=True):
    """Small labeled set; with ``all_cells`` every (a, y) cell is populated."""
    while True:
        X = rng.normal(size=(n, d))
        a = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        if not all_cells or all(np.any((a == j) & (y == k)) for j in (0, 1) for k in (0, 1)):
            break
    nu = np.full(n, 1.0 / n)
    nu_tr = rng.uniform(0.2, 1.0, size=n) / n if nonuniform else nu.copy()
    return LabeledSet(np.arange(n), X, a, y, nu, nu_tr)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
