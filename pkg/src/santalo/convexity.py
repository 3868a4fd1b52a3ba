"""Discrete Legendre-Fenchel transforms, convex envelopes, multimarginal
c-transforms, and finite-difference differential operators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grids import Grid, GridFunction

__all__ = [
    "ConjugatePair",
    "legendre_conjugate",
    "convexify",
    "c_transform_multimarginal",
    "finite_diff_gradient",
    "finite_diff_hessian",
    "ConjugateUnboundedError",
    "InstanceTooLargeError",
]

#: above this fraction of boundary-attained suprema the conjugate is
#: considered unreliable (the true sup may escape the box)
BOUNDARY_FRACTION_TOL = 0.05

#: enumeration budget for the multimarginal sup
C_TRANSFORM_BUDGET = 2_000_000


class ConjugateUnboundedError(RuntimeError):
    pass


class InstanceTooLargeError(RuntimeError):
    pass


def _conjugate_1d(x: np.ndarray, v: np.ndarray, y: np.ndarray):
    """w(y) = max_j (x_j * y - v_j) by the lower-envelope sweep.

    x and y must be sorted ascending; v may contain +inf (skipped).
    Returns (w, arg) with arg the maximizing index into x.
    O(len(x) + len(y)).
    """
    finite = np.isfinite(v)
    orig = np.nonzero(finite)[0]
    xs, vs = x[finite], v[finite]
    if xs.size == 0:
        raise ValueError("conjugate of the everywhere-+inf function")
    # lower convex hull of the points (x_j, v_j); the maximizer of
    # x*y - v over j is always a hull vertex, and advances with y
    hull = []
    for j in range(xs.size):
        while len(hull) >= 2:
            j0, j1 = hull[-2], hull[-1]
            # drop j1 if it lies on or above the segment (j0, j)
            if (vs[j1] - vs[j0]) * (xs[j] - xs[j1]) >= (vs[j] - vs[j1]) * (xs[j1] - xs[j0]):
                hull.pop()
            else:
                break
        hull.append(j)
    hidx = np.asarray(hull)
    hx = xs[hidx]
    hv = vs[hidx]
    w = np.empty(y.size)
    arg = np.empty(y.size, dtype=np.intp)
    i = 0
    for t in range(y.size):
        yt = y[t]
        while i + 1 < hx.size and hx[i + 1] * yt - hv[i + 1] >= hx[i] * yt - hv[i]:
            i += 1
        w[t] = hx[i] * yt - hv[i]
        arg[t] = orig[hidx[i]]
    return w, arg


@dataclass(frozen=True)
class ConjugatePair:
    """A potential with its discrete Legendre conjugate on a dual grid."""

    primal: GridFunction
    dual: GridFunction
    dual_grid: Grid
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def boundary_fraction(self) -> float:
        return float(self.boundary_mask.mean())

    @property
    def boundary_flagged(self) -> bool:
        return self.boundary_fraction > BOUNDARY_FRACTION_TOL


def legendre_conjugate(V: GridFunction, dual_grid: Grid | None = None,
                       strict: bool = False) -> ConjugatePair:
    """Discrete conjugate V*(y) = max over nodes x of <x, y> - V(x).

    Separable in the bilinear coupling: one lower-envelope sweep per
    axis, O(m^n) per dual grid.  Suprema attained on the primal boundary
    are flagged; with strict=True a boundary fraction above 5% raises
    (indicator-type conjugates legitimately saturate, so the default
    only flags).
    """
    if V.inf_mask.all():
        raise ValueError("conjugate of the everywhere-+inf potential")
    grid = V.grid
    if dual_grid is None:
        dual_grid = grid
    if dual_grid.dim != grid.dim:
        raise ValueError("dual grid dimension mismatch")
    x = grid.axis()
    y = dual_grid.axis()
    m = x.size
    # sweep axis by axis; after sweeping axis a it is indexed by dual
    # nodes.  We carry W = -(running sup) so every axis applies the same
    # 1D kernel, and B = boundary-attainment flags of the running argmax.
    W = V.values
    B = np.zeros(W.shape, dtype=bool)
    for ax in range(grid.dim):
        W = np.moveaxis(W, ax, -1)
        B = np.moveaxis(B, ax, -1)
        lead = W.shape[:-1]
        Wout = np.empty(lead + (y.size,))
        Bout = np.empty(lead + (y.size,), dtype=bool)
        for idx in np.ndindex(*lead):
            line = W[idx]
            if not np.isfinite(line).any():
                # sup over this line is -inf: the slot stays excluded
                Wout[idx] = np.inf
                Bout[idx] = False
                continue
            w, arg = _conjugate_1d(x, line, y)
            Wout[idx] = -w
            Bout[idx] = (arg == 0) | (arg == m - 1) | B[idx][arg]
        W = np.moveaxis(Wout, -1, ax)
        B = np.moveaxis(Bout, -1, ax)
    dual_vals = -W
    pair = ConjugatePair(primal=V,
                         dual=GridFunction(dual_grid, dual_vals),
                         dual_grid=dual_grid,
                         boundary_mask=B)
    if strict and pair.boundary_flagged:
        raise ConjugateUnboundedError(
            f"unbounded conjugate: boundary fraction {pair.boundary_fraction:.3f}")
    return pair


def convexify(V: GridFunction) -> GridFunction:
    """Convex envelope via double conjugation; V** <= V nodewise."""
    pair = legendre_conjugate(V)
    pair2 = legendre_conjugate(pair.dual, V.grid)
    # the discrete sup can only undershoot, but clip guards roundoff
    env = np.minimum(pair2.dual.values, V.values)
    return GridFunction(V.grid, env)


def c_transform_multimarginal(tuple_fns, index: int, coupling_scale: float,
                              budget: int = C_TRANSFORM_BUDGET) -> GridFunction:
    """Tighten slot ``index`` of a tuple against the pairwise coupling.

    Returns the largest function of x that keeps
    sum_i V_i >= C * sum_{i<j} <x_i, x_j> valid, i.e. the sup over the
    other slots of C * sum_{i<j} <x_i, x_j> - sum_{i != index} V_i(x_i).
    For k=2 this is Legendre conjugation (scaled by C).
    """
    k = len(tuple_fns)
    if k < 2:
        raise ValueError("need at least two potentials")
    grid = tuple_fns[0].grid
    for f in tuple_fns:
        if f.grid.dim != grid.dim:
            raise ValueError("all potentials must share the grid dimension")
    others = [i for i in range(k) if i != index]
    node_lists = [tuple_fns[i].grid.coords() for i in others]
    counts = [pts.shape[0] for pts in node_lists]
    total = int(np.prod(counts))
    if total * 1 > budget:
        raise InstanceTooLargeError(
            f"instance too large: {total} tuples exceeds budget {budget}")
    X = grid.coords()                      # (N, dim) output nodes
    best = np.full(X.shape[0], -np.inf)
    C = coupling_scale
    vals = [np.where(tuple_fns[i].inf_mask, np.inf, tuple_fns[i].values).ravel()
            for i in others]
    for combo in itertools.product(*[range(c) for c in counts]):
        pts = [node_lists[j][combo[j]] for j in range(len(others))]
        pen = sum(vals[j][combo[j]] for j in range(len(others)))
        if not np.isfinite(pen):
            continue
        cross = 0.0
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                cross += float(pts[a] @ pts[b])
        lin = np.zeros(X.shape[0])
        for p in pts:
            lin += X @ p
        cand = C * (cross + lin) - pen
        np.maximum(best, cand, out=best)
    out = np.where(np.isneginf(best), np.inf, best)
    return GridFunction(grid, out.reshape(grid.shape))


class InfiniteStencilWarning(UserWarning):
    pass


def _valid_mask(V: GridFunction) -> np.ndarray:
    """Nodes whose full finite-difference stencil avoids +inf values."""
    inf = V.inf_mask
    ok = ~inf
    for ax in range(V.grid.dim):
        shifted_up = np.ones_like(ok)
        shifted_dn = np.ones_like(ok)
        sl_up = [slice(None)] * V.grid.dim
        sl_dn = [slice(None)] * V.grid.dim
        sl_up[ax] = slice(1, None)
        sl_dn[ax] = slice(None, -1)
        shifted_up[tuple(sl_dn)] = ~inf[tuple(sl_up)]
        shifted_dn[tuple(sl_up)] = ~inf[tuple(sl_dn)]
        ok &= shifted_up & shifted_dn
    return ok


def finite_diff_gradient(V: GridFunction):
    """Central differences, one-sided at the boundary.

    Returns (grad, ok) with grad of shape grid.shape + (dim,); ok marks
    nodes whose stencil avoided +inf neighbours ("infinite stencil"
    nodes have ok False and grad 0).
    """
    h = V.grid.spacing
    ok = _valid_mask(V)
    safe = np.where(V.inf_mask, 0.0, V.values)
    grad = np.stack([np.gradient(safe, h, axis=ax, edge_order=2)
                     for ax in range(V.grid.dim)], axis=-1)
    grad[~ok] = 0.0
    return grad, ok


def finite_diff_hessian(V: GridFunction):
    """Second differences; mixed partials averaged so the result is
    symmetric by construction.  Returns (hess, ok) with hess of shape
    grid.shape + (dim, dim)."""
    h = V.grid.spacing
    n = V.grid.dim
    ok = _valid_mask(V)
    safe = np.where(V.inf_mask, 0.0, V.values)
    grads = [np.gradient(safe, h, axis=ax, edge_order=2) for ax in range(n)]
    hess = np.empty(V.grid.shape + (n, n))
    for a in range(n):
        for b in range(n):
            hab = np.gradient(grads[a], h, axis=b, edge_order=2)
            hba = np.gradient(grads[b], h, axis=a, edge_order=2)
            hess[..., a, b] = 0.5 * (hab + hba)
    hess[~ok] = 0.0
    return hess, ok


def is_discretely_convex(V: GridFunction, tol: float = 1e-9) -> bool:
    """Second differences along axes and 2D diagonals all >= -tol."""
    v = np.where(V.inf_mask, np.inf, V.values)
    n = V.grid.dim
    directions = []
    for ax in range(n):
        d = [0] * n
        d[ax] = 1
        directions.append(d)
    for a in range(n):
        for b in range(a + 1, n):
            d = [0] * n
            d[a], d[b] = 1, 1
            directions.append(list(d))
    for d in directions:
        # build shifted views along the combined direction
        sl_p, sl_m, sl_c = [], [], []
        for s in d:
            if s == 0:
                sl_p.append(slice(None)); sl_m.append(slice(None)); sl_c.append(slice(None))
            else:
                sl_p.append(slice(2, None)); sl_m.append(slice(None, -2)); sl_c.append(slice(1, -1))
        plus = v[tuple(sl_p)]
        minus = v[tuple(sl_m)]
        center = v[tuple(sl_c)]
        with np.errstate(invalid="ignore"):
            dd = plus + minus - 2 * center
        finite = np.isfinite(plus) & np.isfinite(minus) & np.isfinite(center)
        if finite.any() and np.min(dd[finite]) < -tol:
            return False
    return True
