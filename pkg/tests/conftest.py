from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sidar.model import LinearSystem, ProblemInstance, example_system

settings.register_profile("repo", deadline=None, derandomize=True, print_blob=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ROOT = Path(__file__).resolve().parents[1]
SYSTEMS = ROOT / "systems"


@pytest.fixture(params=[1, 2, 3, 4, 5], ids=lambda k: f"system{k}")
def any_example(request):
    return example_system(request.param)


def instance(k, x0=None, alpha=1.0):
    s = example_system(k)
    x = np.zeros(s.n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    return ProblemInstance(s, x, alpha)


def random_system(rng, n=None, m=None, q=None, pf=True):
    """Small random plant with B of full column rank, R > 0 and Q > 0."""
    n = n or int(rng.integers(1, 5))
    m = m or int(rng.integers(1, n + 1))
    q = q or int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    G = rng.normal(size=(n, q))
    X = rng.normal(size=(n, n))
    Q = X @ X.T / n + 0.1 * np.eye(n)
    Y = rng.normal(size=(m, m))
    R = Y @ Y.T / m + 0.1 * np.eye(m)
    if pf:
        Z = rng.normal(size=(n, n))
        Pf = Z @ Z.T / n
    else:
        Pf = np.zeros((n, n))
    return LinearSystem(A, B, G, Q, R, Pf, "random")


def random_psd(rng, n, scale=1.0):
    X = rng.normal(size=(n, n))
    return scale * X @ X.T / n
