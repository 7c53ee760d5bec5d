"""Discount sweep on small mazes with the benchmark harness.

Each cell of the sweep is a (method, n, gamma, seed) solve; the summary
reports mean and 16/84 % quantiles of wall time and reward per group.
"""
from rosa.harness import format_summary, gamma_sweep, run_bench, summarize

# %% a coarse slice of the default sweep 1 - 10^(-k/8)
gammas = gamma_sweep()[::8]
print("discount factors:", ", ".join(f"{g:.6f}" for g in gammas))

# %% three methods, two maze sizes, a handful of seeds
records = run_bench(["rosa", "bcp", "dpo"], [2, 3], gammas, reps=3)
failed = [r for r in records if r.status != "converged"]
print(f"{len(records)} solves, {len(failed)} not converged")
for r in failed:
    print(f"  {r.method} n={r.n} gamma={r.gamma:.6f} seed={r.seed}: {r.status}")

# %% grouped summary
print(format_summary(summarize(records)))
