import numpy as np
import pytest

from oracles import central_difference, grid_search, random_model, random_policy, value_iteration
from rosa import nlp
from rosa.baselines import (GradientOptions, bcp_solve, dpo_gradient, dpo_solve,
                            evaluate_values, reward_gradient, softmax_policy)
from rosa.maze import blind_controller
from rosa.pomdp import InvalidInput, PomdpModel, reward_of_policy


def test_softmax_rows_and_stability():
    pi = softmax_policy([[1000.0, 0.0], [0.0, 0.0]])
    assert np.allclose(pi, [[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(InvalidInput):
        softmax_policy([[np.nan, 0.0]])


def test_identical_actions_give_zero_gradient_and_uniform_result(rng):
    alpha = rng.dirichlet(np.ones(3), size=3)
    alpha = np.stack([alpha, alpha], axis=1)
    r = rng.normal(size=(3, 1)).repeat(2, axis=1)
    m = PomdpModel(alpha, [0, 0, 0], r, [0.2, 0.3, 0.5], 0.9)
    assert np.max(np.abs(dpo_gradient(m, np.zeros((1, 2))))) <= 1e-15
    res = dpo_solve(m)
    assert res.converged and np.allclose(res.policy, 0.5)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_dpo_blind_controller_matches_grid(gamma):
    m = blind_controller(gamma)
    res = dpo_solve(m)
    assert abs(res.reward - grid_search(m)) <= 1e-4


def test_dpo_fully_observed_matches_value_iteration(rng):
    for _ in range(5):
        m = random_model(rng, 4, 4, 3, 0.9, full=True)
        res = dpo_solve(m)
        assert res.converged
        assert abs(res.reward - value_iteration(m)) <= 1e-5


def test_dpo_gradient_matches_central_differences(rng):
    m = random_model(rng, 5, 3, 3, 0.95)
    theta = rng.normal(size=(3, 3))
    fd = central_difference(lambda t: reward_of_policy(m, softmax_policy(t)), theta)
    g = dpo_gradient(m, theta)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)


def test_reward_gradient_over_independent_entries(rng):
    m = random_model(rng, 4, 2, 3, 0.9)
    pi = random_policy(rng, m)

    def f(p):
        # exact reward with rows left unnormalised: evaluate through the linear system
        tau = p[m.obs_of]
        P = np.einsum("sa,sat,tb->satb", np.ones_like(tau), m.alpha, tau).reshape(12, 12)
        eta0 = ((1 - m.gamma) * m.mu[:, None] * tau).ravel()
        eta = np.linalg.solve(np.eye(12) - m.gamma * P.T, eta0)
        return float(eta @ m.reward.ravel())

    fd = central_difference(f, pi)
    assert np.allclose(reward_gradient(m, pi), fd, atol=1e-7)


def test_constant_reward_has_zero_gradient(rng):
    m = random_model(rng, 4, 2, 3, 0.9).with_reward(np.full((4, 3), 2.0))
    assert np.max(np.abs(dpo_gradient(m, rng.normal(size=(2, 3))))) <= 1e-12


def test_dpo_limits_and_validation(rng):
    m = random_model(rng, 5, 3, 3, 0.99)
    res = dpo_solve(m, GradientOptions(max_iters=1, gtol=1e-14))
    assert res.status == nlp.MAX_ITERS and res.iterations == 1
    assert res.trace[0]["iter"] == 0 and len(res.trace) == 2
    with pytest.raises(InvalidInput):
        dpo_solve(m, theta0=np.zeros((2, 2)))
    with pytest.raises(InvalidInput):
        dpo_gradient(m, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        GradientOptions(c1=0.9, c2=0.1)


def test_bcp_single_state():
    m = PomdpModel(np.ones((1, 1, 1)), [0], [[-0.5]], [1.0], 0.9)
    res = bcp_solve(m)
    assert res.status == nlp.CONVERGED
    assert res.values == pytest.approx([-0.5]) and res.reward == pytest.approx(-0.5)


def test_bcp_fully_observed_matches_value_iteration(rng):
    for _ in range(5):
        m = random_model(rng, 4, 4, 3, 0.9, full=True)
        res = bcp_solve(m)
        assert res.status == nlp.CONVERGED
        assert abs(res.reward - value_iteration(m)) <= 1e-5


def test_bcp_reward_is_reevaluated_and_values_consistent():
    m = blind_controller(0.9)
    res = bcp_solve(m)
    assert res.reward == reward_of_policy(m, res.policy)
    assert np.allclose(res.values, evaluate_values(m, res.policy), atol=1e-6)
    assert abs(res.reward - grid_search(m)) <= 1e-4
