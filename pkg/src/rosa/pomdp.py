"""Finite POMDP model with deterministic observations and exact policy evaluation.

Arrays are indexed ``alpha[s, a, s']``, ``reward[s, a]``, ``pi[o, a]``,
``tau[s, a]`` and ``eta[s, a]``.  Flattened state-action vectors use
row-major order, i.e. pair ``(s, a)`` sits at ``s * n_actions + a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

PROB_TOL = 1e-12
CLAMP_TOL = 1e-12


class InvalidInput(ValueError):
    """Raised when a model, policy or frequency violates its invariants."""


class AssumptionViolation(ValueError):
    """A state (or observation class) has zero state marginal under eta."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_stochastic(arr, axis, name, normalize):
    arr = np.array(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    if np.any(arr < 0):
        idx = tuple(int(i) for i in np.argwhere(arr < 0)[0])
        raise InvalidInput(f"{name} has a negative entry at {idx}")
    sums = arr.sum(axis=axis, keepdims=True)
    if normalize:
        if np.any(sums <= 0):
            raise InvalidInput(f"{name} has a row with zero mass")
        return arr / sums
    bad = np.abs(sums - 1.0) > PROB_TOL
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(np.squeeze(bad, axis=axis))[0])
        if not idx:
            raise InvalidInput(f"{name} does not sum to 1")
        raise InvalidInput(f"{name} row {idx if len(idx) > 1 else idx[0]} does not sum to 1")
    return arr


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Finite POMDP ``(S, O, A, alpha, beta, r)`` with initial law ``mu``.

    The observation mechanism is deterministic: ``obs_of[s]`` is the
    observation emitted in state ``s``.  Construction validates every
    invariant; pass ``normalize=True`` to rescale kernels instead of
    rejecting rows that do not sum to one.
    """

    alpha: np.ndarray
    obs_of: np.ndarray
    reward: np.ndarray
    mu: np.ndarray
    gamma: float
    n_obs: int | None = None
    normalize: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 3 or alpha.shape[0] != alpha.shape[2]:
            raise InvalidInput("alpha must have shape (n_states, n_actions, n_states)")
        n_states, n_actions, _ = alpha.shape
        if n_states < 1 or n_actions < 1:
            raise InvalidInput("model needs at least one state and one action")
        alpha = _check_stochastic(alpha, 2, "alpha", self.normalize)

        obs_of = np.asarray(self.obs_of)
        if obs_of.ndim == 2:
            raise InvalidInput("stochastic observation kernels are not supported; "
                               "pass a deterministic map obs_of[s]")
        if obs_of.shape != (n_states,):
            raise InvalidInput("obs_of must have one entry per state")
        if not np.all(np.equal(np.mod(obs_of, 1), 0)):
            raise InvalidInput("obs_of entries must be integers")
        obs_of = obs_of.astype(np.int64)
        n_obs = int(obs_of.max()) + 1 if self.n_obs is None else int(self.n_obs)
        if np.any(obs_of < 0) or np.any(obs_of >= n_obs):
            raise InvalidInput("obs_of entries must lie in [0, n_obs)")
        missing = np.setdiff1d(np.arange(n_obs), obs_of)
        if missing.size:
            raise InvalidInput(f"observation {int(missing[0])} is not attained by any state")

        reward = np.array(self.reward, dtype=float)
        if reward.shape != (n_states, n_actions) or not np.all(np.isfinite(reward)):
            raise InvalidInput("reward must be a finite (n_states, n_actions) array")
        mu = np.array(self.mu, dtype=float)
        if mu.shape != (n_states,):
            raise InvalidInput("mu must have one entry per state")
        mu = _check_stochastic(mu, 0, "mu", self.normalize)
        gamma = float(self.gamma)
        if not 0.0 < gamma < 1.0:
            raise InvalidInput("gamma must lie in the open interval (0, 1)")

        ro = obs_of.copy()
        ro.setflags(write=False)
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "obs_of", ro)
        object.__setattr__(self, "reward", _readonly(reward))
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "n_obs", n_obs)

    @property
    def n_states(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_actions(self) -> int:
        return self.alpha.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    def obs_classes(self) -> list[np.ndarray]:
        """States grouped by observation, each class in increasing order."""
        return [np.flatnonzero(self.obs_of == o) for o in range(self.n_obs)]

    def with_gamma(self, gamma: float) -> "PomdpModel":
        return PomdpModel(self.alpha, self.obs_of, self.reward, self.mu, gamma, self.n_obs)

    def with_reward(self, reward) -> "PomdpModel":
        return PomdpModel(self.alpha, self.obs_of, reward, self.mu, self.gamma, self.n_obs)


def as_obs_policy(model: PomdpModel, pi, normalize: bool = False) -> np.ndarray:
    """Validate ``pi[o, a]`` against ``model`` and return it as a float array."""
    pi = np.array(pi, dtype=float)
    if pi.shape != (model.n_obs, model.n_actions):
        raise InvalidInput(f"policy shape {pi.shape} does not match "
                           f"(n_obs, n_actions) = {(model.n_obs, model.n_actions)}")
    return _check_stochastic(pi, 1, "policy", normalize)


def uniform_policy(model: PomdpModel) -> np.ndarray:
    return np.full((model.n_obs, model.n_actions), 1.0 / model.n_actions)


def compose_policy(model: PomdpModel, pi) -> np.ndarray:
    """Effective state policy ``tau[s] = pi[obs_of[s]]``."""
    pi = as_obs_policy(model, pi)
    return pi[model.obs_of]


def transition_kernel(model: PomdpModel, pi) -> np.ndarray:
    """Kernel on state-action pairs, ``P[(s,a), (s',a')] = alpha(s'|s,a) pi(a'|obs(s'))``."""
    tau = compose_policy(model, pi)
    S, A = model.n_states, model.n_actions
    P = model.alpha[:, :, :, None] * tau[None, None, :, :]
    return P.reshape(S * A, S * A)


def state_action_frequency(model: PomdpModel, pi) -> np.ndarray:
    """Discounted state-action frequency ``eta[s, a]`` of ``pi``.

    Solves ``(I - gamma P^T) x = (1 - gamma) eta0`` with
    ``eta0(s, a) = mu(s) tau(a|s)`` by a dense LU factorisation.
    """
    tau = compose_policy(model, pi)
    P = transition_kernel(model, pi)
    g = model.gamma
    eta0 = (model.mu[:, None] * tau).ravel()
    lhs = np.eye(P.shape[0]) - g * P.T
    try:
        x = scipy.linalg.solve(lhs, (1.0 - g) * eta0, check_finite=False)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - gamma < 1 makes lhs nonsingular
        raise RuntimeError("state-action frequency system is singular") from exc
    if np.any(x < -CLAMP_TOL):
        raise RuntimeError(f"frequency solve produced a negative entry {x.min():.3e}")
    return np.maximum(x, 0.0).reshape(model.n_states, model.n_actions)


def reward_of_policy(model: PomdpModel, pi) -> float:
    """Normalised discounted reward ``<r, eta^pi>``."""
    eta = state_action_frequency(model, pi)
    return float(np.sum(model.reward * eta))


def condition_frequency(eta) -> np.ndarray:
    """State policy ``tau[s, a] = eta[s, a] / sum_a' eta[s, a']``."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2:
        raise InvalidInput("eta must be a (n_states, n_actions) array")
    marg = eta.sum(axis=1)
    bad = np.flatnonzero(~(marg > 0))
    if bad.size:
        s = int(bad[0])
        raise AssumptionViolation(f"state {s} has zero marginal; conditioning undefined", s)
    return eta / marg[:, None]


def state_marginals(eta) -> np.ndarray:
    return np.asarray(eta, dtype=float).sum(axis=1)
