import numpy as np
import pytest

from longfair.models import GenerativeModel, load_model

SEEDS = (0, 1, 2)


def random_kernel(rng, n, zero_prob=0.0):
    K = rng.dirichlet(np.ones(n), size=n)
    if zero_prob:
        mask = rng.random((n, n)) < zero_prob
        np.fill_diagonal(mask, False)
        K = np.where(mask, 0.0, K)
        K /= K.sum(axis=1, keepdims=True)
    return K


def random_feature_model(rng, n=2):
    g = rng.dirichlet(np.ones(n), size=(2, 2, 2, n))
    gamma = rng.dirichlet(np.ones(2))
    ell = rng.uniform(0.05, 0.95, (2, n))
    return GenerativeModel(gamma=gamma, ell=ell, dynamics=g)


def constant_dynamics_model(T, ell=None, gamma=(0.5, 0.5)):
    """Model whose every transition matrix equals ``T``, so any policy induces ``T``."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    g = np.broadcast_to(T, (2, 2, 2, n, n))
    ell = np.full((2, n), 0.5) if ell is None else ell
    return GenerativeModel(gamma=np.array(gamma), ell=ell, dynamics=g)


@pytest.fixture(scope="session")
def synthetic():
    return load_model()


@pytest.fixture(scope="session")
def model(synthetic):
    return synthetic[0]


@pytest.fixture(scope="session")
def mu0(synthetic):
    return synthetic[1]


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
