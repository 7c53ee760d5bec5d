"""Solve reports for the three methods and the maze benchmark sweep."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .algorithm import rosa_solve
from .baselines import GradientOptions, bcp_solve, dpo_solve
from .constraints import build_constraint_system, residuals
from .io import policy_to_json, write_json
from .maze import build_maze_pomdp, generate_maze
from .nlp import SolveOptions, check_kkt
from .pomdp import PomdpModel, reward_of_policy, state_action_frequency

log = logging.getLogger(__name__)

METHODS = ("rosa", "bcp", "dpo")


def gamma_sweep(k_min=8, k_max=40):
    """Discount factors ``1 - 10**(-k/8)`` for ``k = k_min..k_max``."""
    return [1.0 - 10.0 ** (-k / 8.0) for k in range(k_min, k_max + 1)]


def _policy_certificate(model, pi):
    eta = state_action_frequency(model, pi)
    lin, quad, min_entry = residuals(build_constraint_system(model), eta)
    return eta, {"linear_residual": lin, "quadratic_residual": quad, "min_entry": min_entry,
                 "min_state_marginal": float(eta.sum(axis=1).min())}


def solve_report(method: str, model: PomdpModel, tol=1e-8, max_iters=None, restarts=1,
                 seed=0, gtol=1e-6) -> dict:
    """Run one method and return the report document.

    ``reward`` is always the exact reward of the returned policy.  Solver
    failures are reported through ``status``; they never raise.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    opts = SolveOptions(kkt_tol=tol, **({} if max_iters is None else {"max_iters": max_iters}))
    if method == "rosa":
        res = rosa_solve(model, opts, restarts=restarts, seed=seed)
        pi, eta = res.obs_policy, res.eta_star
        cert = res.certificate.to_json()
        cert["reward_star"] = res.reward_star
        cert["certified"] = bool(res.certified)
        sol = res.solver
        out = {"status": sol.status, "kkt_residual": sol.kkt_residual,
               "constraint_residual": sol.constraint_residual,
               "iterations": sol.iterations, "time_s": res.wall_seconds}
    elif method == "bcp":
        res = bcp_solve(model, opts)
        pi = res.policy
        eta, cert = _policy_certificate(model, pi)
        report = check_kkt(res.problem, res.solver.x, res.solver.lam, res.solver.z)
        cert["kkt_error"] = report.error
        cert["value_gap"] = abs(float(model.mu @ res.values) - res.reward)
        sol = res.solver
        out = {"status": sol.status, "kkt_residual": sol.kkt_residual,
               "constraint_residual": sol.constraint_residual,
               "iterations": sol.iterations, "time_s": res.wall_seconds}
    else:
        gopts = GradientOptions(gtol=gtol, **({} if max_iters is None else {"max_iters": max_iters}))
        res = dpo_solve(model, gopts)
        pi = res.policy
        eta, cert = _policy_certificate(model, pi)
        cert["grad_norm"] = res.grad_norm
        out = {"status": res.status, "kkt_residual": res.grad_norm, "constraint_residual": 0.0,
               "iterations": res.iterations, "time_s": res.wall_seconds, "trace": res.trace}
    doc = {"method": method, "reward": reward_of_policy(model, pi),
           "policy": np.asarray(pi).tolist(), "eta": np.asarray(eta).tolist()}
    doc.update(out)
    doc["certificate"] = cert
    return doc


@dataclass
class BenchRecord:
    method: str
    n: int
    states: int
    gamma: float
    seed: int
    reward: float
    time_s: float
    status: str
    iters: int


CSV_FIELDS = tuple(f.name for f in fields(BenchRecord))


def _run_cell(cell):
    method, n, gamma, seed, tol, max_iters, gtol, policy_dir = cell
    model = build_maze_pomdp(generate_maze(n, seed), gamma)
    t0 = time.perf_counter()
    try:
        doc = solve_report(method, model, tol=tol, max_iters=max_iters, gtol=gtol)
    except Exception as exc:  # a failed cell is data, not a crash
        log.warning("%s n=%d gamma=%r seed=%d failed: %s", method, n, gamma, seed, exc)
        return BenchRecord(method, n, model.n_states, gamma, seed, math.nan,
                           time.perf_counter() - t0, f"error:{type(exc).__name__}", 0)
    if policy_dir is not None:
        write_json(policy_to_json(doc["policy"]),
                   Path(policy_dir) / policy_filename(method, n, gamma, seed))
    log.info("%s n=%d gamma=%r seed=%d %s reward=%.6g t=%.3fs", method, n, gamma, seed,
             doc["status"], doc["reward"], doc["time_s"])
    return BenchRecord(method, n, model.n_states, gamma, seed, doc["reward"],
                       doc["time_s"], doc["status"], doc["iterations"])


def policy_filename(method, n, gamma, seed):
    return f"{method}_n{n}_g{gamma!r}_s{seed}.json"


def bench_cells(methods, ns, gammas, reps, seed0=0, method_reps=None):
    """Cells ``(method, n, gamma, seed)`` in output order; ``method_reps`` caps reps per method."""
    method_reps = method_reps or {}
    cells = []
    for method in methods:
        k = min(reps, method_reps.get(method, reps))
        for n in sorted(ns):
            for gamma in sorted(gammas):
                for rep in range(k):
                    cells.append((method, n, gamma, seed0 + rep))
    return cells


def run_bench(methods, ns, gammas, reps, seed0=0, jobs=1, method_reps=None, tol=1e-8,
              max_iters=None, gtol=1e-6, policy_dir=None) -> list[BenchRecord]:
    cells = bench_cells(methods, ns, gammas, reps, seed0, method_reps)
    if policy_dir is not None:
        Path(policy_dir).mkdir(parents=True, exist_ok=True)
    args = [c + (tol, max_iters, gtol, policy_dir) for c in cells]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, args))  # map keeps submission order
    return [_run_cell(a) for a in args]


def write_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_csv(path) -> list[BenchRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [BenchRecord(r["method"], int(r["n"]), int(r["states"]), float(r["gamma"]),
                        int(r["seed"]), float(r["reward"]), float(r["time_s"]), r["status"],
                        int(r["iters"])) for r in rows]


def summarize(records, quantiles=(0.16, 0.84)) -> list[dict]:
    """Mean and quantiles of time and reward per ``(method, n, gamma)`` group."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.n, r.gamma), []).append(r)
    out = []
    for (method, n, gamma), rs in groups.items():
        t = np.array([r.time_s for r in rs])
        rw = np.array([r.reward for r in rs])
        row = {"method": method, "n": n, "states": rs[0].states, "gamma": gamma,
               "runs": len(rs), "converged": sum(r.status == "converged" for r in rs),
               "time_mean": float(t.mean())}
        for q in quantiles:
            row[f"time_q{q:g}"] = float(np.quantile(t, q))
        finite = rw[np.isfinite(rw)]
        row["reward_mean"] = float(finite.mean()) if finite.size else math.nan
        for q in quantiles:
            row[f"reward_q{q:g}"] = float(np.quantile(finite, q)) if finite.size else math.nan
        out.append(row)
    return out


def format_summary(rows) -> str:
    if not rows:
        return "(no records)"
    keys = list(rows[0])
    lines = ["  ".join(f"{k:>12}" for k in keys)]
    for row in rows:
        cells = []
        for k in keys:
            v = row[k]
            cells.append(f"{v:>12.6g}" if isinstance(v, float) else f"{v!s:>12}")
        lines.append("  ".join(cells))
    return "\n".join(lines)
