import numpy as np
import pytest

from ppta import rng
from ppta.data import Dataset, McmcConfig, PriorConfig
from ppta.simulation import generate_dataset


@pytest.fixture
def prior():
    return PriorConfig()


@pytest.fixture
def short_mcmc():
    return McmcConfig(m1=600, burn1=300, m2=300, burn2=100, seed=11)


@pytest.fixture(scope="session")
def sim_b0():
    data, _ = generate_dataset(500, 5, 0.0, rng.stream(101, rng.DATA, 0, 0))
    return data


@pytest.fixture(scope="session")
def sim_b2():
    data, _ = generate_dataset(500, 5, 2.0, rng.stream(101, rng.DATA, 2, 0))
    return data


def random_dataset(seed, n=200, p=3, strength=1.0):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=(n, p))
    e = 1 / (1 + np.exp(-(-0.3 + strength * x @ gen.normal(size=p) / np.sqrt(p))))
    a = (gen.random(n) < e).astype(int)
    a[:2], a[2:4] = 1, 0
    y = 0.5 * a + x.sum(axis=1) + gen.normal(size=n)
    return Dataset(x, a, y)
