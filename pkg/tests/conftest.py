import numpy as np
import pytest
import scipy.sparse as sp

import reachbound as rb


def random_pomdp(rng, n_states=4, n_actions=2, n_observations=3, density=0.6):
    """Small random model with row-stochastic sparse kernels."""
    def stochastic(n_rows, n_cols):
        mat = np.zeros((n_rows, n_cols))
        for r in range(n_rows):
            k = max(1, int(rng.binomial(n_cols, density)))
            cols = rng.choice(n_cols, size=k, replace=False)
            w = rng.random(k) + 0.05
            mat[r, cols] = w / w.sum()
        return sp.csr_matrix(mat)

    T = [stochastic(n_states, n_states) for _ in range(n_actions)]
    Z = [stochastic(n_states, n_observations) for _ in range(n_actions)]
    start = rb.Belief.from_dense(rng.dirichlet(np.ones(n_states)))
    target = int(rng.integers(n_states))
    return rb.Pomdp.build(n_states, n_actions, n_observations, T, Z, start, {target})


def random_belief(rng, n_states, support=None):
    k = support or int(rng.integers(1, n_states + 1))
    states = rng.choice(n_states, size=k, replace=False)
    probs = rng.dirichlet(np.ones(k))
    return rb.Belief.from_pairs(zip(states.tolist(), probs.tolist()))


@pytest.fixture(scope="session")
def chain3():
    return rb.augment(rb.generate_chain(3))


@pytest.fixture(scope="session")
def fixture_default():
    return rb.loop_fixture(0.5)


@pytest.fixture(scope="session")
def fixture_aug(fixture_default):
    return rb.augment(fixture_default.pomdp)


@pytest.fixture(scope="session")
def gridav4_solved():
    p = rb.augment(rb.preset("grid-av-4"))
    res = rb.solve(p, rb.SolverConfig(epsilon=1e-3, rng_seed=7))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def refuel6_solved():
    p = rb.augment(rb.preset("refuel-6"))
    res = rb.solve(p, rb.SolverConfig(epsilon=1e-3, rng_seed=7))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def fixture_solved(fixture_aug):
    res = rb.solve(fixture_aug, rb.SolverConfig(epsilon=1e-3, rng_seed=7))
    assert res.converged
    return fixture_aug, res
