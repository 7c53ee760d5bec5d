"""Acceptance criteria, each run at its stated tolerance and runtime budget.

Every test prints one ``CRITERION k PASS|FAIL`` line; the lines are repeated
in the terminal summary.
"""
import itertools
import time

import numpy as np

from oracles import (central_difference, grid_search, lp_vertex_enumeration, random_model,
                     random_policy, value_iteration)
from rosa import nlp
from rosa.algorithm import build_problem, rosa_solve
from rosa.baselines import bcp_solve, dpo_gradient, dpo_solve, softmax_policy
from rosa.constraints import LinearEquality, build_constraint_system, residuals
from rosa.maze import (blind_controller, build_maze_pomdp, generate_maze, maze_is_connected,
                       neighbour_pattern)
from rosa.nlp import NlpProblem, check_kkt
from rosa.pomdp import reward_of_policy, state_action_frequency

GAMMAS_8 = (0.9, 0.99, 0.999, 0.9999, 0.99999)


def test_1_mdp_specialisation(criterion):
    # The default kkt_tol of 1e-8 bounds the duality gap, hence the reward
    # error, near n * 1e-8 in absolute terms; a relative 1e-6 on optima close
    # to zero needs a tighter solve, so both are run and reported.
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {1e-8: 0.0, 1e-10: 0.0}
    statuses = set()
    for _ in range(50):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        m = random_model(rng, S, S, A, 0.9, full=True)
        ref = value_iteration(m)
        for tol in worst:
            res = rosa_solve(m, nlp.SolveOptions(kkt_tol=tol))
            statuses.add(res.status)
            worst[tol] = max(worst[tol], abs(res.reward_star - ref) / max(abs(ref), 1e-12))
    elapsed = time.perf_counter() - t0
    ok = worst[1e-10] <= 1e-6 and statuses == {nlp.CONVERGED} and elapsed < 10
    criterion(1, "MDP specialisation vs value iteration", ok,
              f"max rel err {worst[1e-10]:.2e} at kkt_tol 1e-10 (tol 1e-6; "
              f"{worst[1e-8]:.2e} at default 1e-8), {elapsed:.1f}s (< 10s)")


def test_2_blind_controller_grid_oracle(criterion):
    t0 = time.perf_counter()
    gaps = {}
    for gamma in (0.5, 0.9, 0.99):
        m = blind_controller(gamma)
        best = grid_search(m, 1e-3)
        gaps[gamma] = (abs(rosa_solve(m).reward_star - best), abs(dpo_solve(m).reward - best))
    elapsed = time.perf_counter() - t0
    worst = max(max(v) for v in gaps.values())
    criterion(2, "blind controller vs p-grid", worst <= 1e-4 and elapsed < 5,
              f"max gap rosa/dpo {worst:.2e} (tol 1e-4), {elapsed:.2f}s (< 5s)")


def test_3_cross_method_agreement(criterion):
    t0 = time.perf_counter()
    worst, skipped = 0.0, []
    for n, seed in itertools.product((2, 3), range(10)):
        m = build_maze_pomdp(generate_maze(n, seed), 0.99)
        runs = {"rosa": rosa_solve(m), "bcp": bcp_solve(m), "dpo": dpo_solve(m)}
        rewards = {k: (reward_of_policy(m, r.obs_policy) if k == "rosa" else r.reward)
                   for k, r in runs.items() if r.status == nlp.CONVERGED}
        skipped += [f"{k}@n{n}s{seed}" for k in runs if k not in rewards]
        for a, b in itertools.combinations(rewards.values(), 2):
            worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    elapsed = time.perf_counter() - t0
    criterion(3, "ROSA/BCP/DPO agreement on 20 mazes", worst <= 1e-3 and elapsed < 120,
              f"max pairwise rel diff {worst:.2e} (tol 1e-3), non-converged {skipped or 'none'}, "
              f"{elapsed:.1f}s (< 120s)")


def test_4_feasibility_suite(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    min_entry = np.inf
    for _ in range(200):
        S, A = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        m = random_model(rng, S, int(rng.integers(1, S + 1)), A, float(rng.uniform(0.1, 0.9999)))
        lin, quad, mn = residuals(build_constraint_system(m),
                                  state_action_frequency(m, random_policy(rng, m)))
        worst, min_entry = max(worst, lin, quad), min(min_entry, mn)
    criterion(4, "generated constraints hold at eta^pi", worst <= 1e-9 and min_entry >= 0,
              f"max residual {worst:.2e} (tol 1e-9) over 200 pairs, min entry {min_entry:.1e}")


def test_5_constraint_counts(criterion):
    mismatches, checked = [], 0
    for n in range(2, 11):
        for seed in range(25):
            maze = generate_maze(n, seed)
            m = build_maze_pomdp(maze, 0.99)
            S = len(maze.open_cells())
            O = len({neighbour_pattern(maze, r, c) for r, c in maze.open_cells()})
            header = build_constraint_system(m).to_json()["header"]
            got = (header["n_linear"], header["n_quadratic"], header["n_nonneg"])
            checked += 1
            if got != (S, (S - O) * 3, 4 * S):
                mismatches.append((n, seed, got))
    criterion(5, "constraint-count formula", not mismatches,
              f"{checked} mazes, mismatches {mismatches or 'none'}")


def test_6_gradient_correctness(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        S, A = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        m = random_model(rng, S, int(rng.integers(1, S + 1)), A, float(rng.uniform(0.5, 0.99)))
        theta = rng.normal(size=(m.n_obs, A))
        fd = central_difference(lambda t: reward_of_policy(m, softmax_policy(t)), theta, 1e-5)
        g = dpo_gradient(m, theta)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    criterion(6, "DPO gradient vs central differences", worst <= 1e-5,
              f"max rel err {worst:.2e} (tol 1e-5) over 50 instances")


def test_7_maze_structure(criterion):
    bad = []
    for n in range(2, 11):
        for seed in range(25):
            maze = generate_maze(n, seed)
            if len(maze.open_cells()) != 2 * n * n - 1 or not maze_is_connected(maze):
                bad.append((n, seed))
    criterion(7, "maze size 2n^2-1 and connectivity", not bad,
              f"225 mazes (n = 2..10, 25 seeds), failures {bad or 'none'}")


def test_8_gamma_robustness(criterion):
    t0 = time.perf_counter()
    failures = []
    tally = {"bcp": {}, "dpo": {}}
    for gamma in GAMMAS_8:
        for seed in range(20):
            m = build_maze_pomdp(generate_maze(5, seed), gamma)
            res = rosa_solve(m)
            if not (res.status == nlp.CONVERGED and res.certified):
                failures.append((gamma, seed, res.status))
            for name, run in (("bcp", bcp_solve), ("dpo", dpo_solve)):
                st = run(m).status
                tally[name][st] = tally[name].get(st, 0) + 1
    elapsed = time.perf_counter() - t0
    criterion(8, "ROSA converges and certifies for every gamma on 20 n=5 mazes",
              not failures and elapsed < 600,
              f"rosa failures {failures or 'none'}; recorded bcp {tally['bcp']}, "
              f"dpo {tally['dpo']}; {elapsed:.0f}s (< 600s)")


def test_9_scaling_trend(criterion):
    times = {"rosa": {}, "bcp": {}, "dpo": {}}
    incomplete = []
    for n in range(2, 7):
        for seed in range(10):
            m = build_maze_pomdp(generate_maze(n, seed), 0.9999)
            r = rosa_solve(m)
            b = bcp_solve(m)
            times["rosa"].setdefault(n, []).append(r.wall_seconds)
            times["bcp"].setdefault(n, []).append(b.wall_seconds)
            if r.status != nlp.CONVERGED:
                incomplete.append(("rosa", n, seed, r.status))
            if b.status != nlp.CONVERGED:
                incomplete.append(("bcp", n, seed, b.status))
            if seed < 3:  # reduced seed count for the gradient method
                times["dpo"].setdefault(n, []).append(dpo_solve(m).wall_seconds)
    med = {k: {n: float(np.median(v)) for n, v in d.items()} for k, d in times.items()}
    ratio = med["rosa"][6] / med["bcp"][6]
    trend = ", ".join(f"n={n} {med['rosa'][n]:.3f}/{med['bcp'][n]:.3f}/{med['dpo'][n]:.3f}s"
                      for n in range(2, 7))
    criterion(9, "ROSA median time within 2x of BCP at n=6", ratio <= 2.0 and not incomplete,
              f"ratio {ratio:.2f} (<= 2), incomplete {incomplete or 'none'}; "
              f"medians rosa/bcp/dpo {trend}")


def test_10_solver_certification(criterion):
    rng = np.random.default_rng(10)
    uncertified, solves = [], 0
    problems = []
    for seed in range(5):
        m = build_maze_pomdp(generate_maze(3, seed), 0.999)
        problems.append(("rosa-maze", build_problem(m, build_constraint_system(m))))
    for _ in range(10):
        m = random_model(rng, 5, 2, 3, 0.95)
        problems.append(("rosa-random", build_problem(m, build_constraint_system(m))))
    for name, prob in problems:
        sol = nlp.solve(prob)
        if sol.converged:
            solves += 1
            if not check_kkt(prob, sol.x, sol.lam, sol.z).passes(1e-8):
                uncertified.append(name)
    for seed in range(5):
        res = bcp_solve(build_maze_pomdp(generate_maze(2, seed), 0.99))
        if res.solver.converged:
            solves += 1
            if not check_kkt(res.problem, res.solver.x, res.solver.lam, res.solver.z).passes(1e-8):
                uncertified.append("bcp")
    lp_gap = 0.0
    for _ in range(40):
        n = int(rng.integers(2, 9))
        m_rows = int(rng.integers(1, n))
        A = rng.normal(size=(m_rows, n))
        A[0] = rng.uniform(0.5, 1.5, size=n)
        b = A @ rng.uniform(0.1, 1.0, size=n)
        c = rng.normal(size=n)
        prob = NlpProblem(n_vars=n, objective=c, start_point=np.ones(n),
                          linear_eqs=[LinearEquality(np.arange(n), row, -v) for row, v in zip(A, b)])
        sol = nlp.solve(prob)
        solves += sol.converged
        if sol.converged and not check_kkt(prob, sol.x, sol.lam, sol.z).passes(1e-8):
            uncertified.append("lp")
        lp_gap = max(lp_gap, abs(sol.objective_value - lp_vertex_enumeration(c, A, b)))
    criterion(10, "converged solves pass check_kkt; LPs match vertex enumeration",
              not uncertified and lp_gap <= 1e-6,
              f"{solves} converged solves, uncertified {uncertified or 'none'}, "
              f"max LP gap {lp_gap:.1e} (tol 1e-6)")
