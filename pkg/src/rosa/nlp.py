"""Primal-dual interior-point method for linear objectives under equality constraints.

Solves::

    maximize    <c, x>
    subject to  linear equalities   A x + b = 0
                quadratic equalities q_k(x) = 0
                x_i >= l_i           (l_i = 0 or -inf)

Bounds are handled by a logarithmic barrier.  Each iteration takes a Newton
step on the perturbed KKT conditions, factorising the symmetric indefinite
KKT matrix with LAPACK ``sytrf`` and regularising until its inertia is
``(n, m, 0)``.  Steps are safeguarded by the fraction-to-boundary rule and
a backtracking line search on the l1 exact-penalty merit function.

Internally the problem is minimised as ``f(x) = -<c, x>``.  Multipliers
follow the Lagrangian ``L = f + lam^T c(x) - z^T (x - l)``.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.linalg import lapack

from .constraints import LinearEquality, QuadraticEquality

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILURE = "line_search_failure"
TIME_LIMIT = "time_limit"
NUMERICAL_FAILURE = "numerical_failure"

_EPS = np.finfo(float).eps
_SCALE_MAX = 100.0
_TAU = 0.995
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 40
_KAPPA_SIGMA = 1e10
_NU_DECAY = 0.5
_DELTA_C0 = 1e-12


class InfeasibleLinear(ValueError):
    """The linear equalities admit no solution."""


@dataclass
class NlpProblem:
    n_vars: int
    objective: np.ndarray
    linear_eqs: list = field(default_factory=list)
    smooth_eqs: list = field(default_factory=list)
    lower_bounds: np.ndarray | None = None
    start_point: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n_vars)
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (n,):
            raise ValueError("objective must have length n_vars")
        lb = np.zeros(n) if self.lower_bounds is None else np.asarray(self.lower_bounds, dtype=float)
        if lb.shape != (n,) or np.any(np.isposinf(lb)) or np.any(np.isnan(lb)):
            raise ValueError("lower_bounds must be a length-n_vars array of reals or -inf")
        self.lower_bounds = lb
        x0 = np.zeros(n) if self.start_point is None else np.asarray(self.start_point, dtype=float)
        if x0.shape != (n,) or not np.all(np.isfinite(x0)):
            raise ValueError("start_point must be a finite length-n_vars array")
        bounded = np.isfinite(lb)
        if np.any(x0[bounded] <= lb[bounded]):
            raise ValueError("start_point must lie strictly inside the lower bounds")
        self.start_point = x0
        for c in self.linear_eqs:
            if not isinstance(c, LinearEquality) or (c.indices.size and c.indices.max() >= n):
                raise ValueError("linear equality refers to a variable outside the problem")
        for c in self.smooth_eqs:
            if not isinstance(c, QuadraticEquality):
                raise ValueError("smooth equalities must be QuadraticEquality instances")
            top = max(c.rows.max(), c.cols.max(), c.lin_indices.max(initial=-1))
            if top >= n:
                raise ValueError("quadratic equality refers to a variable outside the problem")
        self.n_vars = n

    @property
    def n_eqs(self):
        return len(self.linear_eqs) + len(self.smooth_eqs)


@dataclass
class SolveOptions:
    kkt_tol: float = 1e-8
    max_iters: int = 500
    barrier_init: float = 0.1
    barrier_reduction: float = 0.2
    max_wall_seconds: float = math.inf

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.max_iters > 0 and self.barrier_init > 0
                and self.max_wall_seconds > 0):
            raise ValueError("solver options must be positive")
        if not 0 < self.barrier_reduction < 1:
            raise ValueError("barrier_reduction must lie in (0, 1)")


@dataclass
class NlpSolution:
    x: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    objective_value: float
    status: str
    kkt_residual: float
    constraint_residual: float
    iterations: int
    wall_seconds: float
    restorations: int = 0

    @property
    def converged(self):
        return self.status == CONVERGED

    def summary(self):
        return {"status": self.status, "objective_value": self.objective_value,
                "kkt_residual": self.kkt_residual,
                "constraint_residual": self.constraint_residual,
                "iterations": self.iterations, "wall_seconds": self.wall_seconds}


@dataclass(frozen=True)
class KktReport:
    """Infinity-norm KKT residuals of ``(x, lam, z)``.

    ``error`` scales stationarity and complementarity by the multiplier
    magnitude factors ``scale_d`` and ``scale_c`` (both >= 1), so large but
    correct multipliers do not demand sub-roundoff absolute accuracy.
    """

    stationarity: float
    feasibility: float
    complementarity: float
    dual_infeasibility: float
    bound_violation: float
    scale_d: float
    scale_c: float

    @property
    def error(self):
        return max(self.stationarity / self.scale_d, self.feasibility,
                   self.complementarity / self.scale_c, self.dual_infeasibility,
                   self.bound_violation)

    def passes(self, tol):
        return self.error <= tol


def check_kkt(problem: NlpProblem, x, lam, z) -> KktReport:
    """Evaluate first-order optimality residuals constraint by constraint."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    z = np.asarray(z, dtype=float)
    n = problem.n_vars
    eqs = list(problem.linear_eqs) + list(problem.smooth_eqs)
    if x.shape != (n,) or lam.shape != (len(eqs),) or z.shape != (n,):
        raise ValueError("dimension mismatch in check_kkt")
    grad = -problem.objective.copy()
    cvals = np.zeros(len(eqs))
    for k, c in enumerate(eqs):
        cvals[k] = c.value(x)
        grad += lam[k] * c.gradient(x)
    grad -= z
    lb = problem.lower_bounds
    bounded = np.isfinite(lb)
    gap = np.where(bounded, x - np.where(bounded, lb, 0.0), 0.0)
    s_d, s_c = _scales(lam, z, n)
    return KktReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        feasibility=float(np.max(np.abs(cvals), initial=0.0)),
        complementarity=float(np.max(np.abs(gap * z), initial=0.0)),
        dual_infeasibility=float(max(0.0, -np.min(np.where(bounded, z, 0.0), initial=0.0))
                                 + np.max(np.abs(np.where(bounded, 0.0, z)), initial=0.0)),
        bound_violation=float(max(0.0, -np.min(gap, initial=0.0))),
        scale_d=s_d, scale_c=s_c)


def _scales(lam, z, n):
    m = lam.size
    s_d = max(_SCALE_MAX, (np.abs(lam).sum() + np.abs(z).sum()) / max(m + n, 1)) / _SCALE_MAX
    s_c = max(_SCALE_MAX, np.abs(z).sum() / max(n, 1)) / _SCALE_MAX
    return float(s_d), float(s_c)


class _Evaluator:
    """Vectorised evaluation of all constraints, Jacobians and Lagrangian Hessians."""

    def __init__(self, problem: NlpProblem):
        n = problem.n_vars
        self.n = n
        self.m_lin = len(problem.linear_eqs)
        self.m_quad = len(problem.smooth_eqs)
        self.m = self.m_lin + self.m_quad
        A = np.zeros((self.m_lin, n))
        b = np.zeros(self.m_lin)
        for k, c in enumerate(problem.linear_eqs):
            np.add.at(A[k], c.indices, c.values)
            b[k] = c.constant
        self.A, self.b = A, b
        ks, rs, cs, vs, lk, li, lv = [], [], [], [], [], [], []
        const = np.zeros(self.m_quad)
        for k, c in enumerate(problem.smooth_eqs):
            ks.append(np.full(c.rows.size, k))
            rs.append(c.rows)
            cs.append(c.cols)
            vs.append(c.coeffs)
            lk.append(np.full(c.lin_indices.size, k))
            li.append(c.lin_indices)
            lv.append(c.lin_values)
            const[k] = c.constant
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        self.qk, self.qr, self.qc, self.qv = (cat(ks, np.int64), cat(rs, np.int64),
                                              cat(cs, np.int64), cat(vs, float))
        lin = sp.coo_matrix((cat(lv, float), (cat(lk, np.int64), cat(li, np.int64))),
                            shape=(self.m_quad, n)).toarray()
        self.q_lin = lin
        self.q_const = const

    def constraints(self, x):
        out = np.empty(self.m)
        out[:self.m_lin] = self.A @ x + self.b
        if self.m_quad:
            terms = self.qv * x[self.qr] * x[self.qc]
            out[self.m_lin:] = (np.bincount(self.qk, terms, minlength=self.m_quad)
                                + self.q_lin @ x + self.q_const)
        return out

    def jacobian(self, x):
        J = np.empty((self.m, self.n))
        J[:self.m_lin] = self.A
        if self.m_quad:
            rows = np.concatenate([self.qk, self.qk])
            cols = np.concatenate([self.qr, self.qc])
            vals = np.concatenate([self.qv * x[self.qc], self.qv * x[self.qr]])
            J[self.m_lin:] = sp.coo_matrix((vals, (rows, cols)),
                                           shape=(self.m_quad, self.n)).toarray() + self.q_lin
        return J

    def hessian(self, lam):
        if not self.m_quad:
            return None
        w = lam[self.m_lin:][self.qk] * self.qv
        rows = np.concatenate([self.qr, self.qc])
        cols = np.concatenate([self.qc, self.qr])
        return sp.coo_matrix((np.concatenate([w, w]), (rows, cols)),
                             shape=(self.n, self.n)).toarray()


def factor_inertia(K):
    """Bunch-Kaufman factorisation of symmetric ``K``; returns ``(factor, (n_pos, n_neg, n_zero))``."""
    lu, ipiv, info = lapack.dsytrf(K, lower=1)
    if info < 0:  # pragma: no cover - argument error
        raise RuntimeError("dsytrf argument error")
    N = K.shape[0]
    scale = max(np.max(np.abs(K)), 1.0)
    zero_tol = 10 * _EPS * scale
    pos = neg = zero = 0
    k = 0
    while k < N:
        if ipiv[k] > 0:
            d = lu[k, k]
            if abs(d) <= zero_tol:
                zero += 1
            elif d > 0:
                pos += 1
            else:
                neg += 1
            k += 1
        else:
            blk = np.array([[lu[k, k], lu[k + 1, k]], [lu[k + 1, k], lu[k + 1, k + 1]]])
            for e in np.linalg.eigvalsh(blk):
                if abs(e) <= zero_tol:
                    zero += 1
                elif e > 0:
                    pos += 1
                else:
                    neg += 1
            k += 2
    return (lu, ipiv), (pos, neg, zero)


def _sym_solve(fact, rhs):
    lu, ipiv = fact
    x, info = lapack.dsytrs(lu, ipiv, rhs, lower=1)
    if info != 0:  # pragma: no cover
        raise RuntimeError("dsytrs failed")
    return x


def _equilibrated_inertia(K):
    # symmetric equilibration keeps the inertia (Sylvester) and makes the
    # zero-pivot test scale free
    rmax = np.max(np.abs(K), axis=1)
    d = 1.0 / np.sqrt(np.where(rmax > 0, rmax, 1.0))
    fact, inertia = factor_inertia(d[:, None] * K * d[None, :])
    return fact, d, inertia


class _KktSystem:
    """Regularised KKT matrix ``[[H + dw I, J^T], [J, -dc I]]`` with inertia
    correction and iterative refinement.

    When the Hessian splits into small independent blocks (ROSA's Hessian
    couples only states sharing an observation) the system is reduced to the
    Schur complement ``S = J H^{-1} J^T + dc I``; by Haynsworth's theorem the
    inertia of the full matrix is ``In(H) + In(-S)``.  Otherwise the full
    matrix is factorised.
    """

    def __init__(self, n, m, blocks=None):
        self.n, self.m = n, m
        self.blocks = blocks
        self.last_delta_w = 0.0
        if blocks is not None:
            # blocks of equal size are stacked so each size costs one batched eigh
            sizes = np.array([b.size for b in blocks])
            self._groups = [np.array([b for b in blocks if b.size == k]) for k in np.unique(sizes)]
            self._rows = np.concatenate([np.repeat(g, g.shape[1], axis=1).ravel() for g in self._groups])
            self._cols = np.concatenate([np.tile(g, g.shape[1]).ravel() for g in self._groups])

    def factor(self, H, J, mu):
        n, m = self.n, self.m
        self.H = H
        self.J = J
        if self.blocks is not None:
            Js = sp.csr_matrix(J)
        else:
            base = np.zeros((n + m, n + m))
            base[:n, :n] = H
            base[n:, :n] = J
            base[:n, n:] = J.T
        delta_c = 0.0
        delta_w = 0.0
        while True:
            if self.blocks is not None:
                pos, neg, zero = self._schur_attempt(H, Js, delta_w, delta_c)
            else:
                pos, neg, zero = self._dense_attempt(base, delta_w, delta_c)
            if pos == n and neg == m and zero == 0:
                break
            if delta_c == 0.0 and (zero > 0 or neg < m):
                # singular: regularise the constraint block first, then retry
                delta_c = _DELTA_C0 * mu ** 0.25
                continue
            if neg < m:
                delta_c = min(10 * delta_c, 1.0)
            if pos < n or zero > 0:
                if delta_w == 0.0:
                    delta_w = 1e-8 if self.last_delta_w == 0.0 else max(1e-8, self.last_delta_w / 3)
                else:
                    delta_w *= 10.0
            if delta_w > 1e40:
                raise np.linalg.LinAlgError("inertia correction failed")
        self.last_delta_w = delta_w
        self.delta_w, self.delta_c = delta_w, delta_c
        return self

    def _dense_attempt(self, base, delta_w, delta_c):
        n = self.n
        K = base.copy()
        idx = np.arange(K.shape[0])
        K[idx[:n], idx[:n]] += delta_w
        K[idx[n:], idx[n:]] -= delta_c
        self.fact, self.d, inertia = _equilibrated_inertia(K)
        self.delta_w, self.delta_c = delta_w, delta_c
        return inertia

    def _schur_attempt(self, H, Js, delta_w, delta_c):
        n, m = self.n, self.m
        vals = []
        pos = neg = zero = 0
        for g in self._groups:
            k = g.shape[1]
            Hb = H[g[:, :, None], g[:, None, :]] + delta_w * np.eye(k)
            rmax = np.max(np.abs(Hb), axis=2)
            db = 1.0 / np.sqrt(np.where(rmax > 0, rmax, 1.0))
            w, V = np.linalg.eigh(db[:, :, None] * Hb * db[:, None, :])
            V = db[:, :, None] * V
            tol = k * _EPS * np.maximum(np.max(np.abs(w), axis=1, keepdims=True), 1e-300)
            pos += int(np.sum(w > tol))
            neg += int(np.sum(w < -tol))
            small = np.abs(w) <= tol
            zero += int(np.sum(small))
            w = np.where(small, 1.0, w)
            vals.append(np.einsum("bij,bj,bkj->bik", V, 1.0 / w, V).ravel())
        self.Hinv = sp.csr_matrix((np.concatenate(vals), (self._rows, self._cols)), shape=(n, n))
        S = (Js @ self.Hinv @ Js.T).toarray()
        S[np.arange(m), np.arange(m)] += delta_c
        self.S = S
        self.fact, self.d, (ps, ns, zs) = _equilibrated_inertia(S)
        self.delta_w, self.delta_c = delta_w, delta_c
        return pos + ns, neg + ps, zero + zs

    def _raw_solve(self, rhs):
        if self.blocks is None:
            return self.d * _sym_solve(self.fact, self.d * rhs)
        n = self.n
        r1, r2 = rhs[:n], rhs[n:]
        u = self.Hinv @ r1
        y = self.d * _sym_solve(self.fact, self.d * (self.J @ u - r2))
        return np.concatenate([self.Hinv @ (r1 - self.J.T @ y), y])

    def matvec(self, v):
        n = self.n
        x, y = v[:n], v[n:]
        return np.concatenate([self.H @ x + self.delta_w * x + self.J.T @ y,
                               self.J @ x - self.delta_c * y])

    def solve(self, rhs, refine=2):
        sol = self._raw_solve(rhs)
        for _ in range(refine):
            r = rhs - self.matvec(sol)
            if np.max(np.abs(r)) <= 1e-15 * max(1.0, np.max(np.abs(rhs))):
                break
            sol = sol + self._raw_solve(r)
        return sol

    def curvature(self, dx):
        """``dx^T (H + dw I) dx``."""
        return float(dx @ (self.H @ dx)) + self.delta_w * float(dx @ dx)


def hessian_blocks(problem: NlpProblem):
    """Connected components of the structural Hessian of the smooth equalities."""
    n = problem.n_vars
    rows = [c.rows for c in problem.smooth_eqs]
    cols = [c.cols for c in problem.smooth_eqs]
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    graph = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    k, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    return np.split(order, np.cumsum(np.bincount(labels, minlength=k))[:-1])


def _use_schur(problem, blocks):
    # the reduction needs an invertible Hessian, which the barrier supplies on
    # bounded variables; coupled Hessians gain nothing from it
    if not np.all(np.isfinite(problem.lower_bounds)) or problem.n_eqs == 0:
        return False
    return max(b.size for b in blocks) <= max(8, problem.n_vars // 4)


def _fraction_to_boundary(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve(problem: NlpProblem, options: SolveOptions | None = None) -> NlpSolution:
    """Run the interior-point method from ``problem.start_point``.

    Returns the final iterate together with a status; ``converged`` is only
    reported when :func:`check_kkt` confirms the KKT error is within
    ``options.kkt_tol``.
    """
    opts = options or SolveOptions()
    t0 = time.perf_counter()
    ev = _Evaluator(problem)
    n, m = ev.n, ev.m
    tol = opts.kkt_tol
    lb = problem.lower_bounds
    bnd = np.isfinite(lb)
    lbz = np.where(bnd, lb, 0.0)
    grad_f = -problem.objective

    if ev.m_lin:
        _check_linear_consistency(ev.A, ev.b)

    x = problem.start_point.copy()
    mu = opts.barrier_init
    mu_min = tol / 10.0
    z = np.where(bnd, mu / np.where(bnd, x - lbz, 1.0), 0.0)
    lam = _initial_multipliers(ev.jacobian(x), grad_f - z)
    blocks = hessian_blocks(problem)
    kkt = _KktSystem(n, m, blocks if _use_schur(problem, blocks) else None)
    nu = np.ones(m)
    status = MAX_ITERS
    it = 0
    restorations = 0

    def gap_of(xv):
        return np.where(bnd, xv - lbz, 1.0)

    def barrier_obj(xv, mu_):
        g = gap_of(xv)[bnd]
        if np.any(g <= 0):
            return math.inf
        return float(grad_f @ xv - mu_ * np.sum(np.log(g)))

    def merit(xv, mu_, nu_):
        cv = ev.constraints(xv)
        return barrier_obj(xv, mu_) + float(nu_ @ np.abs(cv)), cv

    def pd_error(xv, lv, zv, cv, J, mu_):
        stat = grad_f + J.T @ lv - zv
        s_d, s_c = _scales(lv, zv, n)
        comp = np.where(bnd, gap_of(xv) * zv - mu_, 0.0)
        return max(np.max(np.abs(stat), initial=0.0) / s_d,
                   np.max(np.abs(cv), initial=0.0),
                   np.max(np.abs(comp), initial=0.0) / s_c)

    def error(cv, J, mu_):
        return pd_error(x, lam, z, cv, J, mu_)

    while True:
        cv = ev.constraints(x)
        J = ev.jacobian(x)
        if not (np.all(np.isfinite(cv)) and np.all(np.isfinite(x))):
            status = NUMERICAL_FAILURE
            break
        err0 = error(cv, J, 0.0)
        if err0 <= tol and check_kkt(problem, x, lam, z).passes(tol):
            status = CONVERGED
            break
        if it >= opts.max_iters:
            status = MAX_ITERS
            break
        if time.perf_counter() - t0 > opts.max_wall_seconds:
            status = TIME_LIMIT
            break
        while mu > mu_min and error(cv, J, mu) <= mu:
            mu = max(mu_min, opts.barrier_reduction * mu)

        gap = gap_of(x)
        sigma = np.where(bnd, z / gap, 0.0)
        W = ev.hessian(lam)
        H = np.diag(sigma) if W is None else W + np.diag(sigma)
        try:
            kkt.factor(H, J, mu)
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break
        grad_b = grad_f - np.where(bnd, mu / gap, 0.0)
        rhs = -np.concatenate([grad_b + J.T @ lam, cv])
        sol = kkt.solve(rhs)
        dx, dlam = sol[:n], sol[n:]
        dz = np.where(bnd, mu / gap - z - sigma * dx, 0.0)
        if log.isEnabledFor(logging.DEBUG):
            lr = np.abs(cv + J @ dx)
            log.debug("   theta lin %.2e quad %.2e | lin-step res lin %.2e quad %.2e | |dx| %.2e",
                      np.abs(cv[:ev.m_lin]).sum(), np.abs(cv[ev.m_lin:]).sum(),
                      lr[:ev.m_lin].max(initial=0), lr[ev.m_lin:].max(initial=0), np.abs(dx).max())

        a_max = _fraction_to_boundary(gap[bnd], dx[bnd], _TAU)
        a_z = _fraction_to_boundary(z[bnd], dz[bnd], _TAU)

        theta = float(np.sum(np.abs(cv)))
        # one exact-penalty weight per constraint, each kept above |multiplier| + 1
        nu = np.maximum(_NU_DECAY * nu, np.abs(lam + dlam) + 1.0)
        lin_viol = np.abs(cv + J @ dx)
        dphi = float(grad_b @ dx)
        D = dphi + float(nu @ (lin_viol - np.abs(cv)))
        drop = float(np.sum(np.abs(cv)) - np.sum(lin_viol))
        if D >= 0 and drop > 1e-14:
            quad = kkt.curvature(dx)
            extra = (D + 0.5 * max(quad, 0.0)) / (0.5 * drop) + 1.0
            nu = nu + extra
            D = dphi + float(nu @ (lin_viol - np.abs(cv)))
        phi0, _ = merit(x, mu, nu)

        tiny = np.max(np.abs(a_max * dx) / (1.0 + np.abs(x)), initial=0.0) < 10 * _EPS
        accepted = False
        alpha = a_max
        if tiny:
            accepted = True
        else:
            for trial in range(_MAX_BACKTRACKS):
                xt = x + alpha * dx
                phit, cvt = merit(xt, mu, nu)
                if phit <= phi0 + _ARMIJO * alpha * D + 10 * _EPS * abs(phi0):
                    accepted = True
                    break
                if trial == 0 and np.sum(np.abs(cvt)) >= theta and theta > 0:
                    # second-order correction against the Maratos effect
                    c_soc = alpha * cv + cvt
                    sol_soc = kkt.solve(-np.concatenate([grad_b + J.T @ lam, c_soc]))
                    dx_soc = sol_soc[:n]
                    a_soc = _fraction_to_boundary(gap[bnd], dx_soc[bnd], _TAU)
                    xs = x + a_soc * dx_soc
                    phis, _ = merit(xs, mu, nu)
                    if phis <= phi0 + _ARMIJO * alpha * D + 10 * _EPS * abs(phi0):
                        dx, dlam = dx_soc, sol_soc[n:]
                        alpha = a_soc
                        dz = np.where(bnd, mu / gap - z - sigma * dx, 0.0)
                        a_z = _fraction_to_boundary(z[bnd], dz[bnd], _TAU)
                        accepted = True
                        break
                alpha *= 0.5

        if not accepted:
            # soft restoration: take the primal-dual step if it reduces the barrier KKT error
            xs = x + a_max * dx
            if np.all(gap_of(xs)[bnd] > 0):
                cvs = ev.constraints(xs)
                e_new = pd_error(xs, lam + a_max * dlam, z + a_z * dz, cvs, ev.jacobian(xs), mu)
                if e_new <= (1.0 - 1e-4) * error(cv, J, mu):
                    alpha = a_max
                    accepted = True

        if not accepted:
            xr = _restore(ev, x, bnd, lbz)
            if xr is None:
                status = LINE_SEARCH_FAILURE
                break
            restorations += 1
            x = xr
            z = np.where(bnd, mu / gap_of(x), 0.0)
            lam = _initial_multipliers(ev.jacobian(x), grad_f - z)
            nu = np.ones(m)
            it += 1
            continue

        x = x + alpha * dx
        lam = lam + alpha * dlam
        z = z + a_z * dz
        gnew = gap_of(x)
        z = np.where(bnd, np.clip(z, mu / (_KAPPA_SIGMA * gnew), _KAPPA_SIGMA * mu / gnew), 0.0)
        if tiny and mu > mu_min:
            mu = max(mu_min, opts.barrier_reduction * mu)
        it += 1
        if log.isEnabledFor(logging.INFO):
            log.info("iter %4d  obj % .10e  kkt %.3e  mu %.2e  alpha %.3e  amax %.2e  "
                     "dw %.1e  dc %.1e  nu %.1e  theta %.1e",
                     it, problem.objective @ x, err0, mu, alpha, a_max, kkt.delta_w,
                     kkt.delta_c, np.max(nu, initial=0.0), theta)

    cv = ev.constraints(x)
    report = check_kkt(problem, x, lam, z)
    return NlpSolution(
        x=x, lam=lam, z=z,
        objective_value=float(problem.objective @ x),
        status=status,
        kkt_residual=float(report.error),
        constraint_residual=float(np.max(np.abs(cv), initial=0.0)),
        iterations=it,
        wall_seconds=time.perf_counter() - t0,
        restorations=restorations,
    )


def _check_linear_consistency(A, b):
    sol, *_ = scipy.linalg.lstsq(A, -b, check_finite=False)
    res = np.max(np.abs(A @ sol + b), initial=0.0)
    if res > 1e-8 * max(1.0, np.max(np.abs(b), initial=0.0)):
        raise InfeasibleLinear(f"linear equalities are inconsistent (residual {res:.3e})")


def _initial_multipliers(J, g):
    if J.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = scipy.linalg.lstsq(J.T, -g, check_finite=False)
    if not np.all(np.isfinite(lam)):
        return np.zeros(J.shape[0])
    return lam


def _restore(ev, x, bnd, lbz, max_iters=30):
    """Reduce the l1 constraint violation with Gauss-Newton steps; None if it stalls."""
    n, m = ev.n, ev.m
    cv = ev.constraints(x)
    theta0 = float(np.sum(np.abs(cv)))
    theta = theta0
    target = 0.9 * theta0
    if theta0 <= 1e3 * _EPS * max(1.0, m):
        return None
    for _ in range(max_iters):
        J = ev.jacobian(x)
        gap = np.where(bnd, x - lbz, 1.0)
        D = np.where(bnd, 1.0 / gap ** 2, 1.0)
        K = np.zeros((n + m, n + m))
        K[np.arange(n), np.arange(n)] = D
        K[n:, :n] = J
        K[:n, n:] = J.T
        K[np.arange(n, n + m), np.arange(n, n + m)] = -1e-10
        try:
            with warnings.catch_warnings():
                # the feasibility system is nearly singular by design
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                sol = scipy.linalg.solve(K, np.concatenate([np.zeros(n), -cv]),
                                         assume_a="sym", check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError):
            return None
        dx = sol[:n]
        alpha = _fraction_to_boundary(gap[bnd], dx[bnd], _TAU)
        for _ in range(_MAX_BACKTRACKS):
            cvt = ev.constraints(x + alpha * dx)
            tht = float(np.sum(np.abs(cvt)))
            if tht <= (1 - 1e-4 * alpha) * theta:
                break
            alpha *= 0.5
        else:
            return None
        x = x + alpha * dx
        cv, theta = cvt, tht
        if theta <= target:
            return x
    return None
