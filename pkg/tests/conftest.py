import sys
from pathlib import Path

import numpy as np
import pytest

import codedctrl as cc

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def spec_a():
    return cc.load_model("paper_sim_A")


@pytest.fixture(scope="session")
def spec_b():
    return cc.load_model("paper_sim_B")


@pytest.fixture(scope="session")
def actions_a(spec_a):
    return cc.enumerate_actions(spec_a)


def make_spec(kernel, cost, beta=0.8, n_symbols=2):
    kernel = np.asarray(kernel, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    spec = cc.ModelSpec(
        n_states=kernel.shape[1],
        n_controls=kernel.shape[0],
        n_symbols=n_symbols,
        kernel=kernel,
        cost=cost,
        beta=beta,
    )
    return spec


@pytest.fixture(scope="session")
def constant_cost_spec():
    """Two-control three-state model whose every cost entry is 0.7."""
    kernel = [
        [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4]],
        [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [0.25, 0.25, 0.5]],
    ]
    return make_spec(kernel, np.full((3, 2), 0.7))


@pytest.fixture(scope="session")
def zero_cost_spec():
    kernel = [
        [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4]],
        [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [0.25, 0.25, 0.5]],
    ]
    return make_spec(kernel, np.zeros((3, 2)))
