"""Explicit constraint system of reward maximisation in state-action space.

Variables are the entries of ``eta`` flattened row-major, so ``eta[s, a]``
is variable ``s * n_actions + a``.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .pomdp import InvalidInput, PomdpModel


@dataclass(frozen=True)
class LinearEquality:
    """``l(x) = <coeffs, x> + constant``, with ``coeffs`` stored sparsely."""

    indices: np.ndarray
    values: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=float)
        if idx.shape != val.shape or idx.ndim != 1:
            raise InvalidInput("indices and values must be 1-d arrays of equal length")
        if not np.any(val != 0):
            raise InvalidInput("linear equality needs a nonzero coefficient")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "constant", float(self.constant))

    def value(self, x):
        return float(np.dot(self.values, np.asarray(x)[self.indices]) + self.constant)

    def gradient(self, x):
        g = np.zeros(len(x))
        np.add.at(g, self.indices, self.values)
        return g

    def to_json(self):
        return {"indices": self.indices.tolist(), "values": self.values.tolist(),
                "constant": self.constant}


@dataclass(frozen=True)
class QuadraticEquality:
    """``q(x) = sum_k coeff_k x[i_k] x[j_k]`` plus optional linear and constant parts.

    Constraints generated from observation classes are purely quadratic; the
    linear/constant parts exist for the bilinear Bellman constraints.
    """

    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray
    lin_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lin_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    constant: float = 0.0

    def __post_init__(self):
        for name, dtype in (("rows", np.int64), ("cols", np.int64), ("coeffs", float),
                            ("lin_indices", np.int64), ("lin_values", float)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype))
        if not (self.rows.shape == self.cols.shape == self.coeffs.shape):
            raise InvalidInput("quadratic term arrays must have equal length")
        if self.rows.size == 0:
            raise InvalidInput("quadratic equality needs at least one quadratic term")
        if self.lin_indices.shape != self.lin_values.shape:
            raise InvalidInput("linear part arrays must have equal length")
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def is_homogeneous(self):
        return self.lin_indices.size == 0 and self.constant == 0.0

    @property
    def terms(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.coeffs.tolist()))

    def value(self, x):
        x = np.asarray(x)
        return float(np.sum(self.coeffs * x[self.rows] * x[self.cols])
                     + np.dot(self.lin_values, x[self.lin_indices]) + self.constant)

    def gradient(self, x):
        x = np.asarray(x)
        g = np.zeros(len(x))
        np.add.at(g, self.rows, self.coeffs * x[self.cols])
        np.add.at(g, self.cols, self.coeffs * x[self.rows])
        np.add.at(g, self.lin_indices, self.lin_values)
        return g

    def hessian(self, n):
        H = np.zeros((n, n))
        np.add.at(H, (self.rows, self.cols), self.coeffs)
        np.add.at(H, (self.cols, self.rows), self.coeffs)
        return H

    def to_json(self):
        out = {"terms": [[i, j, c] for i, j, c in self.terms]}
        if not self.is_homogeneous:
            out["linear"] = {"indices": self.lin_indices.tolist(),
                             "values": self.lin_values.tolist()}
            out["constant"] = self.constant
        return out


@dataclass(frozen=True)
class ConstraintSystem:
    linear: list
    quadratic: list
    n_states: int
    n_actions: int
    anchor_action: int
    anchor_states: dict

    @property
    def n_vars(self):
        return self.n_states * self.n_actions

    def counts(self):
        return len(self.linear), len(self.quadratic), self.n_vars

    def to_json(self):
        n_lin, n_quad, n_nonneg = self.counts()
        return {
            "header": {"n_linear": n_lin, "n_quadratic": n_quad, "n_nonneg": n_nonneg,
                       "n_vars": self.n_vars, "n_states": self.n_states,
                       "n_actions": self.n_actions, "indexing": "row-major (s, a)",
                       "anchor_action": self.anchor_action,
                       "anchor_states": {str(o): s for o, s in self.anchor_states.items()}},
            "linear": [c.to_json() for c in self.linear],
            "quadratic": [c.to_json() for c in self.quadratic],
        }


def build_linear_constraints(model: PomdpModel) -> list[LinearEquality]:
    """One equality per state: ``sum_a eta[s,a] - gamma sum_{s',a'} alpha(s|s',a') eta[s',a'] = (1-gamma) mu(s)``."""
    S, A, g = model.n_states, model.n_actions, model.gamma
    out = []
    for s in range(S):
        coef = -g * model.alpha[:, :, s].copy()
        coef[s, :] += 1.0
        flat = coef.ravel()
        idx = np.flatnonzero(flat)
        out.append(LinearEquality(idx, flat[idx], -(1.0 - g) * model.mu[s]))
    return out


def _default_anchors(model):
    return {o: int(states[0]) for o, states in enumerate(model.obs_classes())}


def build_quadratic_constraints(model: PomdpModel, anchor_action: int = 0,
                                anchor_states: dict | None = None) -> list[QuadraticEquality]:
    """Pairwise equalities forcing ``eta`` rows to be proportional inside each observation class.

    For every observation ``o``, non-anchor state ``s`` in its class and
    action ``a != anchor_action``::

        sum_{a' != a} eta[s_o, a] eta[s, a'] - eta[s_o, a'] eta[s, a] = 0
    """
    A = model.n_actions
    if anchor_states is None:
        anchor_states = _default_anchors(model)
    if not 0 <= anchor_action < A:
        raise InvalidInput("anchor action out of range")
    out = []
    for o, states in enumerate(model.obs_classes()):
        if states.size == 0:
            raise InvalidInput(f"observation {o} has an empty state class")
        so = int(anchor_states[o])
        if so not in states:
            raise InvalidInput(f"anchor state {so} does not emit observation {o}")
        for s in states:
            if s == so:
                continue
            for a in range(A):
                if a == anchor_action:
                    continue
                rows, cols, coeffs = [], [], []
                for b in range(A):
                    if b == a:
                        continue
                    rows += [so * A + a, so * A + b]
                    cols += [s * A + b, s * A + a]
                    coeffs += [1.0, -1.0]
                out.append(QuadraticEquality(rows, cols, coeffs))
    return out


def build_constraint_system(model: PomdpModel, anchor_action: int = 0,
                            anchor_states: dict | None = None) -> ConstraintSystem:
    if anchor_states is None:
        anchor_states = _default_anchors(model)
    return ConstraintSystem(
        linear=build_linear_constraints(model),
        quadratic=build_quadratic_constraints(model, anchor_action, anchor_states),
        n_states=model.n_states,
        n_actions=model.n_actions,
        anchor_action=anchor_action,
        anchor_states=dict(anchor_states),
    )


def count_constraints(model: PomdpModel) -> tuple[int, int, int]:
    S, O, A = model.n_states, model.n_obs, model.n_actions
    return S, (S - O) * (A - 1), S * A


def residuals(system: ConstraintSystem, eta) -> tuple[float, float, float]:
    """Max absolute linear residual, max absolute quadratic residual, min entry of ``eta``."""
    x = np.asarray(eta, dtype=float).ravel()
    if x.size != system.n_vars:
        raise InvalidInput(f"eta has {x.size} entries, system has {system.n_vars} variables")
    lin = max((abs(c.value(x)) for c in system.linear), default=0.0)
    quad = max((abs(c.value(x)) for c in system.quadratic), default=0.0)
    return lin, quad, float(x.min())


@dataclass(frozen=True)
class Polynomial:
    """Sum of monomials; each monomial is ``(coeff, (i1, i2, ...))`` over flat variable indices."""

    monomials: tuple

    @property
    def degree(self):
        return max((len(m) for _, m in self.monomials), default=0)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float).ravel()
        return float(sum(c * np.prod(x[list(m)]) for c, m in self.monomials))


def transfer_inequality(b, support_states=None) -> Polynomial:
    """Polynomial in ``eta`` equivalent in sign to the linear form ``sum b[s,a] tau[s,a]``.

    With ``T`` the set of states where ``b`` is nonzero, the returned
    polynomial is ``sum_{s in T} sum_a b[s,a] eta[s,a] prod_{s' in T, s' != s} sum_a' eta[s',a']``,
    expanded into monomials (degree ``|T|``).
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise InvalidInput("b must be a (n_states, n_actions) array")
    A = b.shape[1]
    support = sorted(int(s) for s in np.flatnonzero(np.any(b != 0, axis=1)))
    if support_states is not None and sorted(int(s) for s in support_states) != support:
        raise InvalidInput("support_states must equal the states where b is nonzero")
    if not support:
        raise InvalidInput("b has empty support")
    acc = defaultdict(float)
    for s in support:
        others = [t for t in support if t != s]
        for a in np.flatnonzero(b[s]):
            for combo in itertools.product(range(A), repeat=len(others)):
                key = tuple(sorted([s * A + int(a)] + [t * A + c for t, c in zip(others, combo)]))
                acc[key] += b[s, a]
    monos = tuple((c, k) for k, c in sorted(acc.items()) if c != 0.0)
    return Polynomial(monos)
