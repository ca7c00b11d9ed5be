import os

import numpy as np
import pytest

from lapcert.eigensolver import cached_solve
from lapcert.model import TruthSpec, exp_family, generate
from lapcert.operators import VOLTERRA, CoefficientPair, assemble_design
from lapcert.posterior import Problem, map_solve

CACHE = os.environ.get("LAPCERT_TEST_CACHE", "/tmp/lapcert_test_eigcache")

# the three coefficient pairs exercised throughout the suite
SPEC_CORPUS = (
    VOLTERRA,
    CoefficientPair((1.0, 0.5), (0.1,)),
    CoefficientPair((1.0, 0.0, 0.25), (0.2, 0.1)),
)


@pytest.fixture(scope="session")
def volterra_eig():
    return cached_solve(VOLTERRA, 4096, 50, CACHE)


@pytest.fixture(scope="session")
def volterra_eig_small():
    return cached_solve(VOLTERRA, 2048, 30, CACHE)


@pytest.fixture(scope="session")
def corpus_eigs():
    return [cached_solve(s, 4096, 50, CACHE) for s in SPEC_CORPUS]


def make_problem(eig, family="poisson", n=500, p=4, gamma=2.0, seed=1,
                 truth=None):
    fam = exp_family(family)
    ds = generate(eig, fam, truth or TruthSpec(p_star=8), n=n, seed=seed)
    des = assemble_design(eig, n, p)
    return Problem(design=des, data=ds, family=fam, gamma=gamma, eig=eig)


@pytest.fixture(scope="session")
def poisson_fit(volterra_eig):
    prob = make_problem(volterra_eig, "poisson", n=500, p=4)
    return prob, map_solve(prob)


@pytest.fixture(scope="session")
def gaussian_fit(volterra_eig):
    prob = make_problem(volterra_eig, "gaussian", n=500, p=2)
    return prob, map_solve(prob)
