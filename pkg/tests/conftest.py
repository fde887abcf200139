import numpy as np
import pytest

from fixshare import _kernels
from fixshare.constructions import build_bayes_union, build_dm, build_hmm
from fixshare.datagen import GaussianAdvice


@pytest.fixture(params=_kernels.available())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _kernels.use(request.param)
    yield request.param
    _kernels.use(previous)


@pytest.fixture
def advice():
    return GaussianAdvice()


@pytest.fixture
def dm_pair():
    return [build_dm(0.1), build_dm(0.3)]


@pytest.fixture
def dm_union(dm_pair):
    return build_bayes_union(None, dm_pair)


def random_hmm(rng, n_states, expert_offset=0.0, n_experts=2):
    """Small finite EHMM with dense random rows and real-valued experts."""
    P = rng.dirichlet(np.ones(n_states), size=n_states)
    G = rng.dirichlet(np.ones(n_experts), size=n_states)
    init = rng.dirichlet(np.ones(n_states))
    return build_hmm({i: init[i] for i in range(n_states)},
                     {i: {j: P[i, j] for j in range(n_states)} for i in range(n_states)},
                     {i: {expert_offset + e: G[i, e] for e in range(n_experts)}
                      for i in range(n_states)})


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
