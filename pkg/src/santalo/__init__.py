"""Numerical laboratory for multifunction Blaschke-Santalo inequalities:
grids and quadrature, discrete Legendre duality, optimal transport and
Wasserstein barycenters, inequality verifiers with signed-slack reports,
monotone iterations, and a seeded experiment harness."""

from . import (barycenter, convexity, flow, functionals, grids, instances,
               transport, verifiers)

__version__ = "0.1.0"

__all__ = [
    "barycenter", "convexity", "flow", "functionals", "grids",
    "instances", "transport", "verifiers", "__version__",
]
