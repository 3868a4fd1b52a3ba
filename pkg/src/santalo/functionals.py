"""Scalar functionals: the product functional S, the pair functional BS,
lambda-affine surface areas, Gaussian relative entropy, and the
non-increasing-profile right-hand-side bound with its hypothesis margin."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .convexity import finite_diff_gradient, finite_diff_hessian, legendre_conjugate
from .grids import Grid, GridFunction, mass_leak_warnings, quadrature_integrate

__all__ = [
    "RhoProfile",
    "FunctionalReport",
    "MarginResult",
    "s_functional",
    "bs_pair_functional",
    "affine_surface_area_fn",
    "relative_entropy_gaussian",
    "rho_rhs_bound",
    "constraint_margin",
    "TailNotResolvedError",
    "NotADensityError",
    "NegativeHessianError",
]

#: exhaustive tuple-enumeration budget for hypothesis margins
MARGIN_EXHAUSTIVE_BUDGET = 1_000_000
#: sample count when falling back to random search
MARGIN_SAMPLE_COUNT = 100_000
#: how many worst samples get a local descent polish
MARGIN_POLISH_COUNT = 100


class TailNotResolvedError(RuntimeError):
    pass


class NotADensityError(ValueError):
    pass


class NegativeHessianError(ValueError):
    pass


@dataclass(frozen=True)
class RhoProfile:
    """Positive non-increasing profile rho, as an analytic family.

    The hypothesis check needs rho at arbitrary arguments, which leave
    any fixed grid, so profiles are closures rather than grid functions.

    family "exp":     rho(t) = exp(-c t)
    family "powexp":  rho(t) = exp(-c sign(t) |t|^beta)
    family "tab":     piecewise-linear in log rho over knots (t_j, r_j)
    """

    family: str
    params: dict = field(default_factory=dict)
    k_context: int = 2

    def __post_init__(self):
        if self.family not in ("exp", "powexp", "tab"):
            raise ValueError(f"invalid family parameter: {self.family!r}")
        if self.family == "tab":
            knots = np.asarray(self.params["knots"], dtype=float)
            if (knots[:, 1] <= 0).any():
                raise ValueError("tabulated rho values must be positive")
            if (np.diff(knots[:, 1]) > 0).any():
                raise ValueError("tabulated rho values must be non-increasing")

    @classmethod
    def exponential(cls, c: float, k_context: int = 2) -> "RhoProfile":
        return cls("exp", {"c": float(c)}, k_context)

    @classmethod
    def power_exp(cls, c: float, beta: float, k_context: int = 2) -> "RhoProfile":
        return cls("powexp", {"c": float(c), "beta": float(beta)}, k_context)

    @classmethod
    def tabulated(cls, knots, k_context: int = 2) -> "RhoProfile":
        return cls("tab", {"knots": [list(map(float, kn)) for kn in knots]}, k_context)

    def log_rho(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.family == "exp":
            return -self.params["c"] * t
        if self.family == "powexp":
            c, beta = self.params["c"], self.params["beta"]
            return -c * np.sign(t) * np.abs(t) ** beta
        knots = np.asarray(self.params["knots"], dtype=float)
        return np.interp(t, knots[:, 0], np.log(knots[:, 1]))

    def __call__(self, t) -> np.ndarray:
        return np.exp(self.log_rho(t))

    def power(self, t, k: int) -> np.ndarray:
        """rho^(1/k)(t), evaluated stably in log space."""
        return np.exp(self.log_rho(t) / k)

    def tail_resolved(self, k: int, n: int, grid: Grid, tol: float = 1e-12) -> bool:
        """The RHS integrand rho^(1/k)(k(k-1)|u|^2 / 2) must have decayed
        below ``tol`` relative to its peak at the box edge."""
        L = grid.half_width
        edge = float(self.power(k * (k - 1) / 2.0 * L * L, k))
        peak = float(self.power(0.0, k))
        return edge <= tol * peak

    def to_json_dict(self) -> dict:
        return {"family": self.family, "params": self.params, "k": self.k_context}

    @classmethod
    def from_json_dict(cls, d: dict) -> "RhoProfile":
        return cls(d["family"], d["params"], d.get("k", 2))


@dataclass
class FunctionalReport:
    name: str
    value: float
    grid_meta: dict
    warnings: list = field(default_factory=list)


def s_functional(potentials) -> FunctionalReport:
    """Product of the integrals of exp(-V_i)."""
    value = 1.0
    warnings = []
    for i, V in enumerate(potentials):
        value *= quadrature_integrate(V, mode="exp")
        warnings += mass_leak_warnings(V, label=f"V{i + 1}")
    return FunctionalReport("S", value, potentials[0].grid.summary(), warnings)


def bs_pair_functional(V: GridFunction, dual_grid: Grid | None = None,
                       strict: bool = False) -> FunctionalReport:
    """int exp(-V) dx * int exp(-V*) dx with the discrete conjugate."""
    pair = legendre_conjugate(V, dual_grid, strict=strict)
    a = quadrature_integrate(V, mode="exp")
    b = quadrature_integrate(pair.dual, mode="exp")
    warnings = mass_leak_warnings(V, label="V") + mass_leak_warnings(pair.dual, label="V*")
    if pair.boundary_flagged:
        warnings.append(
            f"conjugate boundary-attained fraction {pair.boundary_fraction:.3f}")
    return FunctionalReport("BS", a * b, V.grid.summary(), warnings)


def affine_surface_area_fn(V: GridFunction, lam: float) -> FunctionalReport:
    """int exp((2 lam - 1) V - lam <x, grad V>) (det D2 V)^lam dx.

    Nodes with an infinite stencil (domain boundary of indicator-type
    potentials) contribute 0; lam = 0 reduces to int exp(-V).
    """
    if lam == 0.0:
        val = quadrature_integrate(V, mode="exp")
        return FunctionalReport("as_0", val, V.grid.summary(),
                                mass_leak_warnings(V))
    grad, ok_g = finite_diff_gradient(V)
    hess, ok_h = finite_diff_hessian(V)
    ok = ok_g & ok_h & ~V.inf_mask
    coords = V.grid.coords().reshape(V.grid.shape + (V.grid.dim,))
    xdotg = np.sum(coords * grad, axis=-1)
    det = np.linalg.det(hess) if V.grid.dim > 1 else hess[..., 0, 0]
    if (det[ok] < -1e-9).any():
        raise NegativeHessianError(
            f"negative Hessian determinant: min {det[ok].min():.3g}")
    det = np.clip(det, 0.0, None)
    safe_v = np.where(V.inf_mask, 0.0, V.values)
    with np.errstate(over="ignore"):
        integrand = np.exp((2 * lam - 1) * safe_v - lam * xdotg) * det ** lam
    integrand = np.where(ok, integrand, 0.0)
    w = V.grid.quadrature_weights()
    val = float(np.sum(w * integrand))
    return FunctionalReport(f"as_{lam}", val, V.grid.summary())


def gaussian_weights(grid: Grid) -> np.ndarray:
    """Quadrature weights of the standard Gaussian measure at the nodes."""
    x2 = np.sum(grid.coords() ** 2, axis=1).reshape(grid.shape)
    return grid.quadrature_weights() * np.exp(-0.5 * x2) / (2 * np.pi) ** (grid.dim / 2)


def relative_entropy_gaussian(density: GridFunction, norm_tol: float = 1e-6) -> float:
    """int rho log rho d(gamma) for a density rho wrt the standard
    Gaussian, with 0 log 0 := 0."""
    rho = density.values
    if (rho < 0).any() or density.inf_mask.any():
        raise NotADensityError("density must be finite and nonnegative")
    wg = gaussian_weights(density.grid)
    total = float(np.sum(wg * rho))
    if abs(total - 1.0) > norm_tol:
        raise NotADensityError(f"not a probability density: mass {total!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        rlogr = np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0)), 0.0)
    return float(np.sum(wg * rlogr))


def default_rhs_grid(rho: RhoProfile, k: int, n: int,
                     min_half_width: float = 6.0) -> Grid:
    """Grid wide enough for the RHS-bound integrand's tail certificate.

    The integrand decays away from the origin, so we grow the box until
    the edge value drops below the tail threshold, then sample at the
    per-dimension desk-scale resolution.
    """
    m = {1: 201, 2: 61, 3: 21}[n]
    for scale in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0):
        grid = Grid(n, min_half_width * scale, m)
        if rho.tail_resolved(k, n, grid):
            return grid
    raise TailNotResolvedError("tail not resolved up to half-width "
                               f"{min_half_width * 8.0}")


def rho_rhs_bound(rho: RhoProfile, k: int, n: int, grid: Grid) -> float:
    """(int rho^(1/k)(k(k-1)|u|^2/2) du)^k over the given grid."""
    if grid.dim != n:
        raise ValueError("grid dimension does not match n")
    if not rho.tail_resolved(k, n, grid):
        raise TailNotResolvedError("tail not resolved on this grid")
    u2 = np.sum(grid.coords() ** 2, axis=1)
    integrand = rho.power(k * (k - 1) / 2.0 * u2, k).reshape(grid.shape)
    w = grid.quadrature_weights()
    return float(np.sum(w * integrand)) ** k


@dataclass
class MarginResult:
    """Worst sampled slack of  rho(sum_{i<j} <x_i, x_j>) - prod f_i."""

    margin: float
    certification: str          # "exhaustive" or "sampled"
    count: int
    argmin: tuple = ()

    def __float__(self):
        return self.margin


def _orthant_nodes(f: GridFunction, orthant_only: bool, stride: int):
    pts = f.grid.coords()
    vals = np.where(f.inf_mask, np.inf, f.values).ravel()
    if orthant_only:
        keep = (pts >= 0).all(axis=1)
        pts, vals = pts[keep], vals[keep]
    if stride > 1:
        pts, vals = pts[::stride], vals[::stride]
    return pts, vals


def constraint_margin(fns, rho: RhoProfile, orthant_only: bool = True,
                      budget: int = MARGIN_EXHAUSTIVE_BUDGET,
                      sample_count: int = MARGIN_SAMPLE_COUNT,
                      seed: int = 0) -> MarginResult:
    """min over sampled node tuples of rho(cross term) - prod f_i(x_i).

    Exhaustive over (coarsened) node tuples when the product of counts
    fits the budget, otherwise seeded random sampling plus a local
    descent polish of the worst samples.  A negative margin is a finding,
    not an error.
    """
    k = len(fns)
    base = [_orthant_nodes(f, orthant_only, 1) for f in fns]
    counts = [b[0].shape[0] for b in base]
    total = float(np.prod([float(c) for c in counts]))
    if total <= budget:
        pts_list = [b[0] for b in base]
        val_list = [b[1] for b in base]
        exhaustive = True
    else:
        # coarsen: stride each marginal until the product fits
        stride = int(np.ceil((total / budget) ** (1.0 / k)))
        coarse = [_orthant_nodes(f, orthant_only, stride) for f in fns]
        ccounts = [c[0].shape[0] for c in coarse]
        if float(np.prod([float(c) for c in ccounts])) <= budget:
            pts_list = [c[0] for c in coarse]
            val_list = [c[1] for c in coarse]
            exhaustive = False  # coarsened: sampled certification
        else:
            pts_list = [b[0] for b in base]
            val_list = [b[1] for b in base]
            exhaustive = False

    if exhaustive or float(np.prod([float(p.shape[0]) for p in pts_list])) <= budget:
        idx_grids = np.meshgrid(*[np.arange(p.shape[0]) for p in pts_list],
                                indexing="ij")
        idx = [g.ravel() for g in idx_grids]
        cert = "exhaustive" if exhaustive else "sampled"
        count = idx[0].size
    else:
        rng = np.random.default_rng(seed)
        idx = [rng.integers(0, p.shape[0], size=sample_count) for p in pts_list]
        cert = "sampled"
        count = sample_count

    def eval_margin(index_lists):
        S = np.zeros((index_lists[0].size, fns[0].grid.dim))
        Q = np.zeros(index_lists[0].size)
        P = np.ones(index_lists[0].size)
        for i in range(k):
            xi = pts_list[i][index_lists[i]]
            S += xi
            Q += np.sum(xi ** 2, axis=1)
            fi = val_list[i][index_lists[i]]
            P = P * np.where(np.isinf(fi), np.inf, fi)
        cross = 0.5 * (np.sum(S ** 2, axis=1) - Q)
        P = np.where(np.isinf(P), np.inf, P)
        vals = rho(cross) - np.where(np.isinf(P), np.inf, P)
        return np.where(np.isnan(vals), np.inf, vals)

    margins = eval_margin(idx)
    order = np.argsort(margins)
    best = float(margins[order[0]])
    best_idx = tuple(int(idx[i][order[0]]) for i in range(k))

    if cert == "sampled":
        # local descent from the worst samples over neighbouring nodes
        for w in order[:MARGIN_POLISH_COUNT]:
            cur = [int(idx[i][w]) for i in range(k)]
            cur_val = float(margins[w])
            improved = True
            steps = 0
            while improved and steps < 50:
                improved = False
                steps += 1
                for i in range(k):
                    for d in (-1, 1):
                        cand = list(cur)
                        cand[i] = min(max(cand[i] + d, 0), pts_list[i].shape[0] - 1)
                        if cand[i] == cur[i]:
                            continue
                        v = float(eval_margin([np.array([c]) for c in cand])[0])
                        if v < cur_val:
                            cur, cur_val, improved = cand, v, True
            if cur_val < best:
                best = cur_val
                best_idx = tuple(cur)

    return MarginResult(margin=best, certification=cert, count=int(count),
                        argmin=best_idx)
