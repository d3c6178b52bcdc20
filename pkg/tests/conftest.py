import numpy as np
import pytest

from cfslope import Dataset, generate, make_dgp


@pytest.fixture(scope="session")
def sample_a():
    return generate(make_dgp("A_continuous", 5000, 7))


@pytest.fixture(scope="session")
def sample_b():
    return generate(make_dgp("B_binary", 8000, 11))


@pytest.fixture(scope="session")
def sample_c():
    return generate(make_dgp("C_sequential", 12000, 13))


def toy_dataset(n=200, seed=0, binary_y=False, with_p=False):
    """Small hand-rolled dataset for unit tests (no confounding structure)."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(n)
    z = rng.standard_normal(n)
    d = (rng.random(n) < 0.5).astype(float)
    if binary_y:
        y = (rng.random(n) < 0.4).astype(float)
    else:
        y = 1.0 + g + 0.5 * z + rng.standard_normal(n)
    p = np.maximum(d, (rng.random(n) < 0.7).astype(float)) if with_p else None
    return Dataset(y=y, d=d, g=g, x=np.column_stack([g, z]),
                   covariate_names=["g", "z"], row_ids=np.arange(n), p=p, g_index=0)
