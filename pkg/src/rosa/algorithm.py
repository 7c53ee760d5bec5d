"""Reward optimisation in state-action space.

Maximise ``<r, eta>`` over the feasible state-action frequencies of the POMDP
(linear flow equalities, class-proportionality quadratic equalities,
``eta >= 0``), then recover the policy by conditioning.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import nlp
from .constraints import ConstraintSystem, build_constraint_system, residuals
from .nlp import NlpProblem, NlpSolution, SolveOptions
from .pomdp import (AssumptionViolation, PomdpModel, condition_frequency,
                    reward_of_policy, state_action_frequency, state_marginals,
                    uniform_policy)

START_FLOOR = 1e-10
REWARD_CERT_TOL = 1e-6


@dataclass
class Certificate:
    linear_residual: float
    quadratic_residual: float
    min_entry: float
    reward_gap: float
    kkt: nlp.KktReport

    def feasible(self, tol):
        return max(self.linear_residual, self.quadratic_residual) <= tol and self.min_entry >= 0

    def reward_consistent(self, reward):
        return self.reward_gap <= REWARD_CERT_TOL * (1.0 + abs(reward))

    def to_json(self):
        return {"linear_residual": self.linear_residual,
                "quadratic_residual": self.quadratic_residual,
                "min_entry": self.min_entry, "reward_gap": self.reward_gap,
                "kkt_error": self.kkt.error, "stationarity": self.kkt.stationarity,
                "complementarity": self.kkt.complementarity}


@dataclass
class RosaResult:
    eta_star: np.ndarray
    reward_star: float
    state_policy: np.ndarray
    obs_policy: np.ndarray
    solver: NlpSolution
    certificate: Certificate
    system: ConstraintSystem
    wall_seconds: float

    @property
    def status(self):
        return self.solver.status

    @property
    def certified(self):
        return (self.solver.converged and self.certificate.kkt.passes(self._tol)
                and self.certificate.feasible(10 * self._tol))

    _tol: float = 1e-8


def recover_observation_policy(model: PomdpModel, tau, eta) -> np.ndarray:
    """Solve ``beta pi = tau`` class by class, weighting states by their marginal in ``eta``."""
    tau = np.asarray(tau, dtype=float)
    marg = state_marginals(eta)
    pi = np.empty((model.n_obs, model.n_actions))
    for o, states in enumerate(model.obs_classes()):
        w = marg[states]
        total = w.sum()
        if not total > 0:
            raise AssumptionViolation(f"observation {o} has zero total marginal", o)
        row = (w / total) @ tau[states]
        row = np.maximum(row, 0.0)
        pi[o] = row / row.sum()
    return pi


def build_problem(model: PomdpModel, system: ConstraintSystem, start_policy=None) -> NlpProblem:
    pi0 = uniform_policy(model) if start_policy is None else start_policy
    x0 = np.maximum(state_action_frequency(model, pi0).ravel(), START_FLOOR)
    return NlpProblem(n_vars=system.n_vars, objective=model.reward.ravel(),
                      linear_eqs=system.linear, smooth_eqs=system.quadratic,
                      lower_bounds=np.zeros(system.n_vars), start_point=x0)


def _restart_policy(model, seed, k):
    rng = np.random.default_rng([int(seed), int(k)])
    u = uniform_policy(model)
    return 0.5 * u + 0.5 * rng.dirichlet(np.ones(model.n_actions), size=model.n_obs)


def rosa_solve(model: PomdpModel, options: SolveOptions | None = None,
               restarts: int = 1, seed: int = 0) -> RosaResult:
    """Run ROSA on ``model``.

    The first start is the frequency of the uniform policy; further restarts
    begin at frequencies of seed-derived random policies, which are feasible
    as well.  Among the runs the best converged objective wins (ties go to
    the earlier restart); if none converged the best objective is kept.
    """
    opts = options or SolveOptions()
    t0 = time.perf_counter()
    system = build_constraint_system(model)
    best = None
    for k in range(max(1, int(restarts))):
        start = None if k == 0 else _restart_policy(model, seed, k)
        sol = nlp.solve(build_problem(model, system, start), opts)
        key = (sol.converged, sol.objective_value)
        if best is None or key > (best.converged, best.objective_value):
            best = sol
    sol = best
    eta = np.maximum(sol.x, 0.0).reshape(model.n_states, model.n_actions)
    tau = condition_frequency(eta)
    pi = recover_observation_policy(model, tau, eta)
    reward_star = float(np.sum(model.reward * eta))
    lin, quad, min_entry = residuals(system, sol.x)
    problem = build_problem(model, system)
    cert = Certificate(
        linear_residual=lin, quadratic_residual=quad, min_entry=min_entry,
        reward_gap=abs(reward_star - reward_of_policy(model, pi)),
        kkt=nlp.check_kkt(problem, sol.x, sol.lam, sol.z))
    res = RosaResult(eta_star=eta, reward_star=reward_star, state_policy=tau,
                     obs_policy=pi, solver=sol, certificate=cert, system=system,
                     wall_seconds=time.perf_counter() - t0)
    res._tol = opts.kkt_tol
    return res
