"""Comparison methods: direct policy optimisation and Bellman-constrained programming.

DPO ascends the exact reward of a tabular softmax policy with L-BFGS.  BCP
optimises policy and value jointly under the normalised Bellman equation
``v = gamma P_pi v + (1 - gamma) r_pi`` with the interior-point solver.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import line_search

from . import nlp
from .constraints import LinearEquality, QuadraticEquality
from .nlp import NlpProblem, NlpSolution, SolveOptions
from .pomdp import (InvalidInput, PomdpModel, compose_policy, reward_of_policy,
                    state_action_frequency, transition_kernel, uniform_policy)


def softmax_policy(theta) -> np.ndarray:
    """Row-wise softmax ``pi[o, a] = exp(theta[o, a]) / sum_b exp(theta[o, b])``."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidInput("theta has non-finite entries")
    e = np.exp(theta - theta.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def reward_gradient(model: PomdpModel, pi) -> np.ndarray:
    """``dR/dpi[o, a]`` treating the entries of ``pi`` as independent.

    With ``q = (I - gamma P)^{-1} r`` on state-action pairs,
    ``dR = (1 - gamma) d eta0 . q + gamma eta^T dP q``; both terms touch
    ``pi(.|o)`` only through the states emitting ``o``.
    """
    g = model.gamma
    P = transition_kernel(model, pi)
    q = scipy.linalg.solve(np.eye(P.shape[0]) - g * P, model.reward.ravel(), check_finite=False)
    q = q.reshape(model.n_states, model.n_actions)
    eta = state_action_frequency(model, pi)
    inflow = np.einsum("ij,ijk->k", eta, model.alpha)
    weight = (1.0 - g) * model.mu + g * inflow
    G = np.zeros((model.n_obs, model.n_actions))
    np.add.at(G, model.obs_of, weight[:, None] * q)
    return G


def dpo_gradient(model: PomdpModel, theta) -> np.ndarray:
    """Exact ``dR/dtheta`` of the softmax policy, shape ``(n_obs, n_actions)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_obs, model.n_actions):
        raise InvalidInput(f"theta shape {theta.shape} does not match "
                           f"{(model.n_obs, model.n_actions)}")
    pi = softmax_policy(theta)
    G = reward_gradient(model, pi)
    return pi * (G - np.sum(pi * G, axis=1, keepdims=True))


@dataclass
class GradientOptions:
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-6
    max_iters: int = 1000
    max_wall_seconds: float = math.inf

    def __post_init__(self):
        if self.memory < 1 or self.max_iters < 1 or self.gtol <= 0:
            raise ValueError("memory, max_iters and gtol must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("Wolfe constants need 0 < c1 < c2 < 1")


@dataclass
class DpoResult:
    policy: np.ndarray
    reward: float
    theta: np.ndarray
    status: str
    iterations: int
    grad_norm: float
    trace: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def converged(self):
        return self.status == nlp.CONVERGED


def _two_loop(g, pairs):
    """L-BFGS product ``H g`` from stored ``(s, y)`` pairs, oldest first."""
    q = g.copy()
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if pairs:
        s, y = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def dpo_solve(model: PomdpModel, options: GradientOptions | None = None,
              theta0=None) -> DpoResult:
    """Maximise the exact reward over softmax parameters with L-BFGS.

    Works on ``f(theta) = -R(theta)``.  A failed line search first drops the
    curvature memory and retries along the steepest-descent direction; a
    second failure ends the run with status ``line_search_failure`` and the
    best iterate seen.
    """
    opts = options or GradientOptions()
    t0 = time.perf_counter()
    shape = (model.n_obs, model.n_actions)
    x = np.zeros(int(np.prod(shape))) if theta0 is None else np.asarray(theta0, float).ravel().copy()
    if x.size != np.prod(shape):
        raise InvalidInput(f"theta0 must have shape {shape}")

    def f(v):
        return -reward_of_policy(model, softmax_policy(v.reshape(shape)))

    cache = {}

    def grad(v):
        # the line search evaluates the gradient at the accepted point; reuse it
        key = v.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = -dpo_gradient(model, v.reshape(shape)).ravel()
        return cache[key]

    def search(d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # scipy LineSearchWarning
            return line_search(f, grad, x, d, gfk=gx, old_fval=fx, c1=opts.c1, c2=opts.c2)

    fx, gx = f(x), grad(x)
    pairs = []
    trace = [{"iter": 0, "reward": -fx, "grad_norm": float(np.max(np.abs(gx)))}]
    status = nlp.MAX_ITERS
    it = 0
    while True:
        gnorm = float(np.max(np.abs(gx)))
        if gnorm <= opts.gtol:
            status = nlp.CONVERGED
            break
        if it >= opts.max_iters:
            break
        if time.perf_counter() - t0 > opts.max_wall_seconds:
            status = nlp.TIME_LIMIT
            break
        d = -_two_loop(gx, pairs)
        if gx @ d >= 0:
            pairs.clear()
            d = -gx
        step = search(d)
        if step[0] is None and pairs:
            pairs.clear()
            d = -gx
            step = search(d)
        alpha, new_f = step[0], step[3]
        if alpha is None:
            status = nlp.LINE_SEARCH_FAILURE
            trace.append({"iter": it + 1, "reward": -fx, "grad_norm": gnorm,
                          "event": "line_search_failure"})
            break
        x_new = x + alpha * d
        g_new = grad(x_new)
        s, y = x_new - x, g_new - gx
        if y @ s > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            pairs.append((s, y))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        x, fx, gx = x_new, (f(x_new) if new_f is None else new_f), g_new
        it += 1
        trace.append({"iter": it, "reward": -fx, "grad_norm": float(np.max(np.abs(gx)))})

    theta = x.reshape(shape)
    pi = softmax_policy(theta)
    return DpoResult(policy=pi, reward=reward_of_policy(model, pi), theta=theta,
                     status=status, iterations=it, grad_norm=float(np.max(np.abs(gx))),
                     trace=trace, wall_seconds=time.perf_counter() - t0)


@dataclass
class BcpResult:
    policy: np.ndarray
    reward: float
    values: np.ndarray
    solver: NlpSolution
    problem: NlpProblem
    wall_seconds: float

    @property
    def status(self):
        return self.solver.status


def evaluate_values(model: PomdpModel, pi) -> np.ndarray:
    """Normalised values solving ``v = gamma P_pi v + (1 - gamma) r_pi``."""
    tau = compose_policy(model, pi)
    P = np.einsum("sa,sat->st", tau, model.alpha)
    r = np.sum(tau * model.reward, axis=1)
    g = model.gamma
    return scipy.linalg.solve(np.eye(model.n_states) - g * P, (1.0 - g) * r, check_finite=False)


def build_bcp_problem(model: PomdpModel, start_policy=None) -> NlpProblem:
    """Variables ``[pi.ravel(), v]``; maximise ``<mu, v>``."""
    S, O, A, g = model.n_states, model.n_obs, model.n_actions, model.gamma
    n_pi = O * A
    pi0 = uniform_policy(model) if start_policy is None else np.asarray(start_policy, float)
    v0 = evaluate_values(model, pi0)
    bellman = []
    for s in range(S):
        o = int(model.obs_of[s])
        a_idx, t_idx = np.nonzero(model.alpha[s])
        rows = o * A + a_idx
        cols = n_pi + t_idx
        coeffs = -g * model.alpha[s, a_idx, t_idx]
        lin_idx = [n_pi + s] + [o * A + a for a in range(A)]
        lin_val = [1.0] + list(-(1.0 - g) * model.reward[s])
        bellman.append(QuadraticEquality(rows, cols, coeffs, lin_idx, lin_val))
    simplex = [LinearEquality(np.arange(o * A, (o + 1) * A), np.ones(A), -1.0) for o in range(O)]
    lower = np.concatenate([np.zeros(n_pi), np.full(S, -np.inf)])
    return NlpProblem(n_vars=n_pi + S, objective=np.concatenate([np.zeros(n_pi), model.mu]),
                      linear_eqs=simplex, smooth_eqs=bellman, lower_bounds=lower,
                      start_point=np.concatenate([pi0.ravel(), v0]))


def bcp_solve(model: PomdpModel, options: SolveOptions | None = None) -> BcpResult:
    """Bellman-constrained programming from the uniform policy.

    The returned reward is always re-evaluated from the (clipped and
    renormalised) policy, never read off the solver's ``v``.
    """
    t0 = time.perf_counter()
    problem = build_bcp_problem(model)
    sol = nlp.solve(problem, options)
    n_pi = model.n_obs * model.n_actions
    pi = np.maximum(sol.x[:n_pi].reshape(model.n_obs, model.n_actions), 0.0)
    sums = pi.sum(axis=1, keepdims=True)
    pi = np.where(sums > 0, pi / np.where(sums > 0, sums, 1.0), 1.0 / model.n_actions)
    return BcpResult(policy=pi, reward=reward_of_policy(model, pi), values=sol.x[n_pi:].copy(),
                     solver=sol, problem=problem, wall_seconds=time.perf_counter() - t0)
