"""Regular box grids on [-L, L]^n, sampled functions, measures and quadrature.

Everything downstream (conjugates, transport, verifiers) consumes these
types.  Grids are value objects: two grids with equal parameters compare
equal and reproduce the same node coordinates bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "GridFunction",
    "DiscreteMeasure",
    "build_grid",
    "symmetrize_unconditional",
    "quadrature_integrate",
    "mass_leak_fraction",
    "sample_density",
    "DimensionError",
    "ZeroMassError",
]

#: boundary contribution of exp(-f) above this fraction of the total means
#: the box is too small to trust the integral
MASS_LEAK_TOL = 1e-6

#: relative weight below which sample_density drops a node
TAU_DROP = 1e-14


class DimensionError(ValueError):
    pass


class ZeroMassError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Tensor grid of ``points_per_axis`` nodes per axis on [-L, L]^dim."""

    dim: int
    half_width: float
    points_per_axis: int

    #: desk-scale caps on nodes per axis, keyed by dimension
    MAX_POINTS = {1: 401, 2: 61, 3: 21}

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DimensionError(f"dimension unsupported: {self.dim}")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if self.points_per_axis > self.MAX_POINTS[self.dim]:
            raise ValueError(
                f"points_per_axis {self.points_per_axis} exceeds the "
                f"{self.MAX_POINTS[self.dim]}-point cap in dimension "
                f"{self.dim}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.points_per_axis ** self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis: -L + j*h, j = 0..m-1."""
        m, L = self.points_per_axis, self.half_width
        return -L + np.arange(m) * (2.0 * L / (m - 1))

    def coords(self) -> np.ndarray:
        """All node coordinates, shape (num_nodes, dim), row-major."""
        axes = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def axis_weights(self) -> np.ndarray:
        """1D trapezoid weights (h, halved at the endpoints)."""
        w = np.full(self.points_per_axis, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def quadrature_weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights, shape = grid shape."""
        w1 = self.axis_weights()
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    def boundary_mask(self) -> np.ndarray:
        """Boolean mask of nodes lying on the box boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "half_width": self.half_width,
            "points_per_axis": self.points_per_axis,
            "spacing": self.spacing,
        }


def build_grid(dim: int, half_width: float, points_per_axis: int) -> Grid:
    return Grid(dim=dim, half_width=float(half_width),
                points_per_axis=int(points_per_axis))


@dataclass(frozen=True)
class GridFunction:
    """Scalar field sampled at grid nodes; +inf marks off-domain nodes.

    Values are stored in an array of the grid's shape (row-major, axis 0
    slowest).  +inf is allowed, NaN and -inf never are.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if np.isnan(v).any():
            raise ValueError("GridFunction values must not contain NaN")
        if np.isneginf(v).any():
            raise ValueError("GridFunction values must not contain -inf")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        """Sample ``fn`` at the nodes.  ``fn`` takes an (N, dim) array."""
        vals = np.asarray(fn(grid.coords()), dtype=float)
        return cls(grid, vals.reshape(grid.shape))

    @property
    def inf_mask(self) -> np.ndarray:
        return np.isinf(self.values)

    @property
    def finite_everywhere(self) -> bool:
        return not self.inf_mask.any()

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values)

    def is_unconditional(self, tol: float = 0.0) -> bool:
        g = symmetrize_unconditional(self)
        both_inf = self.inf_mask & g.inf_mask
        diff = np.abs(np.where(both_inf, 0.0, self.values - g.values))
        return bool(np.nanmax(diff) <= tol) and bool(
            (self.inf_mask == g.inf_mask).all())

    def to_json(self) -> str:
        mask = self.inf_mask
        vals = np.where(mask, 0.0, self.values)
        return json.dumps({
            "dim": self.grid.dim,
            "half_width": self.grid.half_width,
            "points_per_axis": self.grid.points_per_axis,
            "values": vals.ravel().tolist(),
            "inf_mask": mask.ravel().astype(int).tolist(),
        })

    @classmethod
    def from_json(cls, doc: str) -> "GridFunction":
        d = json.loads(doc)
        grid = build_grid(d["dim"], d["half_width"], d["points_per_axis"])
        vals = np.array(d["values"], dtype=float).reshape(grid.shape)
        mask = np.array(d["inf_mask"], dtype=bool).reshape(grid.shape)
        vals = np.where(mask, np.inf, vals)
        return cls(grid, vals)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud with probability weights."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights length mismatch")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, points, weights) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float)
        s = w.sum()
        if s <= 0 or not np.isfinite(s):
            raise ZeroMassError("zero mass")
        return cls(points, w / s)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points ** 2, axis=1))


def symmetrize_unconditional(f: GridFunction) -> GridFunction:
    """Average f over the 2^n coordinate sign flips.

    The grid is symmetric about the origin by construction, so flipping a
    coordinate is a reversal of the values array along that axis.
    Sequentially averaging over each axis equals the full orbit average
    and is idempotent bit-exactly.
    """
    v = f.values
    for ax in range(f.grid.dim):
        v = 0.5 * (v + np.flip(v, axis=ax))
    return GridFunction(f.grid, v)


def quadrature_integrate(f: GridFunction, mode: str = "exp") -> float:
    """Trapezoid tensor-product integral.

    mode="exp" computes  int exp(-f) dx  with exp(-inf) := 0;
    mode="direct" computes  int f dx  (f must be finite everywhere, with
    +inf nodes treated as contributing 0 -- indicator-type integrands).
    """
    w = f.grid.quadrature_weights()
    safe = np.where(f.inf_mask, 0.0, f.values)
    if mode == "exp":
        integrand = np.where(f.inf_mask, 0.0, np.exp(-safe))
    elif mode == "direct":
        integrand = safe
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.sum(w * integrand))


def mass_leak_fraction(f: GridFunction, mode: str = "exp") -> float:
    """Fraction of the integral carried by boundary nodes.

    Above MASS_LEAK_TOL the box is too small and the caller should record
    a "mass leak" warning.
    """
    w = f.grid.quadrature_weights()
    safe = np.where(f.inf_mask, 0.0, f.values)
    if mode == "exp":
        integrand = np.where(f.inf_mask, 0.0, np.exp(-safe))
    else:
        integrand = np.abs(safe)
    total = np.sum(w * integrand)
    if total <= 0:
        return 0.0
    boundary = np.sum((w * integrand)[f.grid.boundary_mask()])
    return float(boundary / total)


def mass_leak_warnings(f: GridFunction, mode: str = "exp", label: str = "") -> list:
    frac = mass_leak_fraction(f, mode=mode)
    if frac > MASS_LEAK_TOL:
        tag = f" ({label})" if label else ""
        return [f"mass leak{tag}: boundary fraction {frac:.3g}"]
    return []


def sample_density(f: GridFunction, tau_drop: float = TAU_DROP) -> DiscreteMeasure:
    """Probability measure with weights ~ exp(-f) * quadrature weight.

    Nodes whose relative weight falls below ``tau_drop`` are dropped to
    keep downstream LP sizes bounded.
    """
    w = f.grid.quadrature_weights().ravel()
    inf = f.inf_mask.ravel()
    safe = np.where(inf, 0.0, f.values.ravel())
    raw = np.where(inf, 0.0, np.exp(-safe)) * w
    total = raw.sum()
    if total <= 0 or not np.isfinite(total):
        raise ZeroMassError("zero mass")
    keep = raw > tau_drop * raw.max()
    pts = f.grid.coords()[keep]
    return DiscreteMeasure.normalized(pts, raw[keep])
