import math

import numpy as np
import pytest

from sinkloss import CostMatrix, Histogram, validate_histogram


@pytest.fixture
def symmetric_2x2():
    """mu = nu = (1/2, 1/2), cost [[0,1],[1,0]], lam = 1.

    Closed form (hand-derived): by symmetry u = v = const, so the plan is
    s^2 * [[1, e^-1], [e^-1, 1]] with row sums 1/2, giving
    a = 1/(2(1+e^-1)) on the diagonal, b = e^-1/(2(1+e^-1)) off it and
    transport cost 2b = e^-1/(1+e^-1).
    """
    mu = validate_histogram([0.5, 0.5])
    nu = validate_histogram([0.5, 0.5])
    c = CostMatrix(cost=np.array([[0.0, 1.0], [1.0, 0.0]]))
    k = math.exp(-1.0)
    a = 1.0 / (2.0 * (1.0 + k))
    b = k / (2.0 * (1.0 + k))
    return {"mu": mu, "nu": nu, "c": c, "lam": 1.0, "a": a, "b": b, "e0": 2.0 * b}


def random_pair(rng: np.random.Generator, d: int, lo=0.5, hi=1.5):
    m = rng.uniform(lo, hi, d)
    n = rng.uniform(lo, hi, d)
    return Histogram(mass=m / m.sum()), Histogram(mass=n / n.sum())


def random_cost(rng: np.random.Generator, d1: int, d2: int, scale=1.0) -> CostMatrix:
    return CostMatrix(cost=rng.uniform(0.0, scale, (d1, d2)))
