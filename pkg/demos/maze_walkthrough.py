"""A maze navigation POMDP solved three ways.

The agent only sees which of its eight neighbouring cells are walls, so
cells with the same surroundings are indistinguishable and must share an
action distribution.
"""
import numpy as np

from rosa import (bcp_solve, build_constraint_system, build_maze_pomdp, count_constraints,
                  dpo_solve, generate_maze, rosa_solve)
from rosa.maze import ACTION_NAMES

# %% generate a maze (rooms on even cells, carved walls between them)
maze = generate_maze(3, seed=4)
print(maze.render())
model = build_maze_pomdp(maze, gamma=0.999)
print(f"\n{model.n_states} states, {model.n_obs} observations, {model.n_actions} actions")

# %% the program solved by ROSA: flow equalities, class proportionality, eta >= 0
system = build_constraint_system(model)
print("constraints (linear, quadratic, nonnegativity):", system.counts(),
      "formula:", count_constraints(model))

# %% solve and read the policy per observation
res = rosa_solve(model)
print(f"\nrosa: {res.status}, reward {res.reward_star:.6f}, certified {res.certified}, "
      f"{res.solver.iterations} iterations, {res.wall_seconds:.3f}s")
for o, row in enumerate(res.obs_policy):
    states = np.flatnonzero(model.obs_of == o)
    best = ACTION_NAMES[int(row.argmax())]
    print(f"  observation {o:2d} ({len(states)} cells): {best:5s} {np.round(row, 3)}")

# %% the two baselines reach the same reward on this instance
bcp = bcp_solve(model)
dpo = dpo_solve(model)
print(f"\nbcp: {bcp.status}, reward {bcp.reward:.6f}, {bcp.wall_seconds:.3f}s")
print(f"dpo: {dpo.status}, reward {dpo.reward:.6f}, {dpo.wall_seconds:.3f}s")
