import numpy as np
import pytest

from gamma_models.mdp import gridworld, random_mdp, random_policy, swap_chain, uniform_policy


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def chain():
    return swap_chain()


@pytest.fixture
def chain_policy():
    return uniform_policy(2, 1)


@pytest.fixture
def grid():
    return gridworld(5)


@pytest.fixture
def make_problem():
    """Random MDP with a random policy, both drawn from ``seed``."""
    def build(n_states=10, n_actions=3, seed=0):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(n_states, n_actions, rng)
        return mdp, random_policy(n_states, n_actions, rng)
    return build
