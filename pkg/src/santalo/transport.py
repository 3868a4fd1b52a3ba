"""Discrete optimal transport: exact LP couplings with duals, log-domain
entropic solvers with epsilon annealing, and their multimarginal variants
for pairwise inner-product gains."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.special import logsumexp

from .grids import DiscreteMeasure

__all__ = [
    "TransportPlan",
    "MultiPlan",
    "w2_squared",
    "sinkhorn",
    "solve_multimarginal",
    "multimarginal_gain_tensor",
    "SolverFailedError",
]

#: certified duality-gap requirement for the exact LP route
LP_GAP_TOL = 1e-8


class SolverFailedError(RuntimeError):
    pass


def _linprog_eq(c, A_eq, b_eq, label: str):
    """Equality-constrained LP with a presolve-off retry: the solver's
    presolve misclassifies some couplings with very small marginal
    weights as infeasible."""
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                      method="highs", options={"presolve": False})
    if not res.success:
        raise SolverFailedError(f"{label} failed: {res.message}")
    return res


@dataclass
class TransportPlan:
    """Coupling of two discrete measures with optimal value and duals."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    plan: np.ndarray = field(repr=False)
    cost: float = 0.0
    potential_u: np.ndarray = field(default=None, repr=False)
    potential_v: np.ndarray = field(default=None, repr=False)
    dual_gap: float = np.inf
    method: str = "lp"

    def marginal_errors(self):
        row = np.abs(self.plan.sum(axis=1) - self.source.weights).max()
        col = np.abs(self.plan.sum(axis=0) - self.target.weights).max()
        return float(row), float(col)

    def support(self, tol: float = 0.0):
        """Indices (i, j) carrying plan mass above tol."""
        return np.argwhere(self.plan > tol)

    def row_average_map(self) -> np.ndarray:
        """Barycentric projection: conditional mean of the target given
        each source point, shape (N, dim)."""
        row = self.plan.sum(axis=1)
        safe = np.where(row > 0, row, 1.0)
        return (self.plan @ self.target.points) / safe[:, None]


def _sq_dist_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (np.sum(x ** 2, axis=1)[:, None] + np.sum(y ** 2, axis=1)[None, :]
            - 2.0 * x @ y.T)


def w2_squared(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TransportPlan:
    """Exact squared 2-Wasserstein distance by linear programming.

    The certified duality gap cost - (u.a + v.b) must close below
    LP_GAP_TOL or the solve is rejected.
    """
    C = _sq_dist_matrix(mu.points, nu.points)
    N, M = C.shape
    # row-sum and column-sum equality constraints on the flattened plan
    rows = sp.kron(sp.eye(N), np.ones((1, M)), format="csr")
    cols = sp.kron(np.ones((1, N)), sp.eye(M), format="csr")
    # the constraints are rank-deficient by one (both sides carry the
    # same total mass); drop the last column constraint, whose dual is 0
    A = sp.vstack([rows, cols[:-1]], format="csr")
    b = np.concatenate([mu.weights, nu.weights[:-1]])
    res = _linprog_eq(C.ravel(), A, b, "transport LP")
    plan = res.x.reshape(N, M)
    duals = np.asarray(res.eqlin.marginals)
    u = duals[:N].copy()
    v = np.concatenate([duals[N:], [0.0]])
    # normalize: duals are unique only up to an additive split
    shift = u[0]
    u -= shift
    v += shift
    cost = float(C.ravel() @ res.x)
    gap = cost - float(u @ mu.weights + v @ nu.weights)
    if abs(gap) > LP_GAP_TOL:
        raise SolverFailedError(f"duality gap {gap:.3g} exceeds {LP_GAP_TOL}")
    return TransportPlan(mu, nu, plan, cost, u, v, abs(gap), "lp")


def sinkhorn(mu: DiscreteMeasure, nu: DiscreteMeasure,
             eps_target: float = 1e-3, eps_start: float = 1.0,
             max_iters: int = 2000, marg_tol: float = 1e-9) -> TransportPlan:
    """Entropic coupling in the log domain with epsilon halved in stages
    from eps_start down to eps_target (warm-starting the potentials)."""
    C = _sq_dist_matrix(mu.points, nu.points)
    la = np.log(np.where(mu.weights > 0, mu.weights, 1e-300))
    lb = np.log(np.where(nu.weights > 0, nu.weights, 1e-300))
    f = np.zeros(mu.size)
    g = np.zeros(nu.size)
    eps_stages = []
    eps = max(eps_start, eps_target)
    while eps > eps_target:
        eps_stages.append(eps)
        eps /= 2.0
    eps_stages.append(eps_target)
    for eps in eps_stages:
        for _ in range(max_iters):
            f = -eps * logsumexp((g[None, :] - C) / eps + lb[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - C) / eps + la[:, None], axis=0)
            # row marginal error of the implied plan
            log_pi = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
            err = np.abs(np.exp(logsumexp(log_pi, axis=1)) - mu.weights).max()
            if err < marg_tol:
                break
    plan = np.exp(log_pi)
    cost = float(np.sum(plan * C))
    dual = float(f @ mu.weights + g @ nu.weights)
    return TransportPlan(mu, nu, plan, cost, f, g, abs(cost - dual), "sinkhorn")


def multimarginal_gain_tensor(measures, coupling_scale: float,
                              weights=None) -> np.ndarray:
    """Gain tensor G[i1..ik] = C * sum_{a<b} w_a w_b <x_a, y_b>."""
    k = len(measures)
    if weights is None:
        weights = np.ones(k)
    weights = np.asarray(weights, dtype=float)
    shape = tuple(m.size for m in measures)
    G = np.zeros(shape)
    for a in range(k):
        for b in range(a + 1, k):
            ip = measures[a].points @ measures[b].points.T
            sh = [1] * k
            sh[a], sh[b] = shape[a], shape[b]
            G = G + coupling_scale * weights[a] * weights[b] * ip.reshape(sh)
    return G


@dataclass
class MultiPlan:
    """k-marginal coupling maximizing a pairwise inner-product gain."""

    measures: tuple
    plan: np.ndarray = field(repr=False)
    gain: float = 0.0
    potentials: tuple = ()
    dual_gap: float = np.inf
    method: str = "lp"
    coupling_scale: float = 1.0

    def marginal_error(self) -> float:
        k = len(self.measures)
        err = 0.0
        for i in range(k):
            axes = tuple(a for a in range(k) if a != i)
            err = max(err, float(np.abs(self.plan.sum(axis=axes)
                                        - self.measures[i].weights).max()))
        return err


def solve_multimarginal(measures, coupling_scale: float, weights=None,
                        method: str = "lp", eps_target: float = 1e-3,
                        max_iters: int = 500) -> MultiPlan:
    """Maximize  C * sum_{a<b} w_a w_b <x_a, x_b>  over couplings.

    method="lp" solves the flattened exact LP (duals v_i recovered from
    the marginal constraints, normalized so v_i of the first support
    point is 0 for i >= 2); method="sinkhorn" runs cyclic log-domain
    updates with epsilon annealing.
    """
    k = len(measures)
    G = multimarginal_gain_tensor(measures, coupling_scale, weights)
    shape = G.shape
    if method == "lp":
        n_var = G.size
        blocks = []
        for i in range(k):
            left = int(np.prod(shape[:i])) if i > 0 else 1
            right = int(np.prod(shape[i + 1:])) if i < k - 1 else 1
            Ai = sp.kron(np.ones((1, left)),
                         sp.kron(sp.eye(shape[i]), np.ones((1, right))),
                         format="csr")
            blocks.append(Ai)
        # each block's rows sum to the total mass: k-1 redundancies.
        # Drop the last row of blocks 2..k; the dropped duals are 0.
        A = sp.vstack([blocks[0]] + [Bi[:-1] for Bi in blocks[1:]],
                      format="csr")
        b = np.concatenate([measures[0].weights]
                           + [m.weights[:-1] for m in measures[1:]])
        res = _linprog_eq(-G.ravel(), A, b, "multimarginal LP")
        plan = res.x.reshape(shape)
        gain = float(G.ravel() @ res.x)
        duals = np.asarray(res.eqlin.marginals)
        pots = []
        off = 0
        for i in range(k):
            ni = shape[i] if i == 0 else shape[i] - 1
            pi = -duals[off:off + ni]
            if i > 0:
                pi = np.concatenate([pi, [0.0]])
            pots.append(pi.copy())
            off += ni
        # shift so v_i[0] = 0 for i >= 2, absorbing constants into v_1
        for i in range(1, k):
            c = pots[i][0]
            pots[i] -= c
            pots[0] += c
        dual_val = float(sum(p @ m.weights for p, m in zip(pots, measures)))
        gap = abs(dual_val - gain)
        if gap > LP_GAP_TOL:
            raise SolverFailedError(f"duality gap {gap:.3g} exceeds {LP_GAP_TOL}")
        return MultiPlan(tuple(measures), plan, gain, tuple(pots), gap,
                         "lp", coupling_scale)
    if method != "sinkhorn":
        raise ValueError(f"unknown method {method!r}")

    logw = [np.log(np.where(m.weights > 0, m.weights, 1e-300))
            for m in measures]
    pots = [np.zeros(s) for s in shape]
    eps_stages = []
    eps = 1.0
    while eps > eps_target:
        eps_stages.append(eps)
        eps /= 2.0
    eps_stages.append(eps_target)

    def log_kernel(eps):
        # (G + sum_i f_i + sum_i log a_i) / handled per-update
        T = G / eps
        for i in range(k):
            sh = [1] * k
            sh[i] = shape[i]
            T = T + ((pots[i] / eps) + logw[i]).reshape(sh)
        return T

    for eps in eps_stages:
        for _ in range(max_iters):
            delta = 0.0
            for i in range(k):
                T = log_kernel(eps)
                axes = tuple(a for a in range(k) if a != i)
                lse = logsumexp(T, axis=axes)   # log of marginal i
                upd = pots[i] + eps * (logw[i] - lse)
                delta = max(delta, float(np.abs(upd - pots[i]).max()))
                pots[i] = upd
            if delta < 1e-10:
                break
    log_pi = log_kernel(eps_stages[-1])
    plan = np.exp(log_pi)
    gain = float(np.sum(plan * G))
    dual_val = float(sum(p @ m.weights for p, m in zip(pots, measures)))
    return MultiPlan(tuple(measures), plan, gain, tuple(pots),
                     abs(dual_val - gain), "sinkhorn", coupling_scale)
