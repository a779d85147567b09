import re

import numpy as np
import pytest

from hlsmm import Dataset, Hyperparams, make_lowrank_separable


def pytest_runtest_logreport(report):
    """Emit the FAIL counterpart of the acceptance suite's PASS lines."""
    if report.failed and "test_acceptance" in report.nodeid:
        match = re.search(r"test_c(\d+)", report.nodeid)
        if match:
            print(f"\n[C{int(match.group(1))}] FAIL ({report.when})")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(20240811)


def random_dataset(seed: int, m: int = 6, p: int = 3, q: int = 2) -> Dataset:
    """Small random dataset with both labels present."""
    gen = make_rng(seed)
    xs = gen.standard_normal((m, p, q))
    ys = np.where(gen.integers(0, 2, size=m) == 1, 1, -1)
    ys[0], ys[1] = 1, -1  # force both classes
    return Dataset(xs=xs, ys=ys.astype(np.int8), name=f"random-{seed}")


@pytest.fixture(scope="session")
def synthetic():
    """Margin-separated low-rank dataset shared across tests."""
    data, w_star, bias = make_lowrank_separable(seed=11)
    return data, w_star, bias


@pytest.fixture(scope="session")
def default_hp() -> Hyperparams:
    return Hyperparams(beta=0.1, sigma=0.1, rank=2)
