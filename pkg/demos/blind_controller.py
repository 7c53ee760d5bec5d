"""Blind controller: one observation, two actions, closed-form rewards.

Action 0 stays put and action 1 swaps the two states; only state 1 pays.
A blind policy is a single coin ``(1 - p, p)``, so the whole policy space
is the unit interval and the optimum can be read off a grid.
"""
import numpy as np

from rosa import blind_controller, dpo_solve, reward_of_policy, rosa_solve

# %% the reward landscape over p
for gamma in (0.5, 0.9, 0.99):
    model = blind_controller(gamma)
    ps = np.linspace(0, 1, 1001)
    rewards = np.array([reward_of_policy(model, [[1 - p, p]]) for p in ps])
    print(f"gamma {gamma}: grid optimum {rewards.max():.6f} at p = {ps[rewards.argmax()]:.3f}"
          f"  (always swapping gives gamma/(1+gamma) = {gamma / (1 + gamma):.6f})")

    # %% the same optimum from state-action space and from the softmax gradient
    res = rosa_solve(model)
    dpo = dpo_solve(model)
    print(f"  rosa  reward_star {res.reward_star:.6f}  policy {np.round(res.obs_policy[0], 4)}"
          f"  status {res.status}")
    print(f"  dpo   reward      {dpo.reward:.6f}  policy {np.round(dpo.policy[0], 4)}"
          f"  iterations {dpo.iterations}")

# %% the optimal frequency lies on the quadratic variety
model = blind_controller(0.9)
res = rosa_solve(model)
print("\neta_star =\n", np.round(res.eta_star, 6))
q = res.system.quadratic[0]
print("class-proportionality residual at eta_star:", abs(q.value(res.eta_star.ravel())))
