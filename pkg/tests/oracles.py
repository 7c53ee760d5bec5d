"""Independent reference computations used by the tests.

None of these call into the package's solvers; they share only the model
container.
"""
import itertools

import numpy as np

from rosa.pomdp import PomdpModel


def random_model(rng, n_states, n_obs, n_actions, gamma, full=False):
    """Random POMDP with Dirichlet kernels, positive ``mu`` and every observation attained."""
    alpha = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if full:
        obs_of = np.arange(n_states)
        n_obs = n_states
    else:
        obs_of = np.concatenate([np.arange(n_obs), rng.integers(0, n_obs, n_states - n_obs)])
        rng.shuffle(obs_of)
    reward = rng.normal(size=(n_states, n_actions))
    mu = rng.dirichlet(np.ones(n_states))
    return PomdpModel(alpha=alpha, obs_of=obs_of, reward=reward, mu=mu, gamma=gamma,
                      n_obs=n_obs, normalize=True)


def random_policy(rng, model):
    return rng.dirichlet(np.ones(model.n_actions), size=model.n_obs)


def truncated_series_eta(model, pi, tail=1e-12):
    """``(1 - gamma) sum_t gamma^t nu_t`` summed until ``gamma^(T+1) < tail``."""
    tau = np.asarray(pi)[model.obs_of]
    nu = model.mu[:, None] * tau
    eta = np.zeros_like(nu)
    g, w = model.gamma, 1.0
    while w >= tail:
        eta += w * nu
        nu = np.einsum("sa,sat->t", nu, model.alpha)[:, None] * tau
        w *= g
    return (1.0 - g) * eta


def value_iteration(model, tol=1e-12):
    """Optimal normalised value of the fully observed MDP; iterate until sup-norm residual < tol."""
    g = model.gamma
    v = np.zeros(model.n_states)
    while True:
        q = (1.0 - g) * model.reward + g * model.alpha @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            return float(model.mu @ v_new)
        v = v_new


def blind_reward_by_series(model, p):
    return float(np.sum(model.reward * truncated_series_eta(model, np.array([[1 - p, p]]))))


def grid_search(model, step=1e-3):
    """Best exact reward over two-action blind policies ``(1 - p, p)`` on a grid."""
    from rosa.pomdp import reward_of_policy
    ps = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    return max(reward_of_policy(model, np.array([[1 - p, p]])) for p in ps)


def lp_vertex_enumeration(c, A, b):
    """Maximise ``c x`` s.t. ``A x = b``, ``x >= 0`` by enumerating basic feasible solutions."""
    m, n = A.shape
    best = -np.inf
    rank = np.linalg.matrix_rank(A)
    for basis in itertools.combinations(range(n), rank):
        B = A[:, basis]
        if np.linalg.matrix_rank(B) < rank:
            continue
        xb, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.max(np.abs(B @ xb - b)) > 1e-10 or np.min(xb) < -1e-10:
            continue
        x = np.zeros(n)
        x[list(basis)] = xb
        best = max(best, float(c @ x))
    return best


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g
