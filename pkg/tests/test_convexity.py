"""Discrete Legendre conjugation, envelopes, c-transforms, and finite
differences."""

import numpy as np
import pytest

from santalo.convexity import (ConjugateUnboundedError, InstanceTooLargeError,
                               c_transform_multimarginal, convexify,
                               finite_diff_gradient, finite_diff_hessian,
                               is_discretely_convex, legendre_conjugate)
from santalo.grids import GridFunction, build_grid


def quadratic(grid, c=1.0):
    return GridFunction.from_callable(
        grid, lambda x: 0.5 * c * np.sum(x ** 2, axis=-1))


class TestLegendreConjugate:
    def test_quadratic_self_conjugate(self):
        g = build_grid(1, 6.0, 121)
        pair = legendre_conjugate(quadratic(g))
        # nodes are shared between the primal and dual grids, so the sup
        # over x of xy - x^2/2 is attained exactly at x = y
        assert np.allclose(pair.dual.values, quadratic(g).values, atol=1e-12)

    def test_scaled_quadratic(self):
        g = build_grid(1, 6.0, 241)
        pair = legendre_conjugate(quadratic(g, c=2.0))
        # (c x^2/2)* = y^2/(2c); dual nodes fall between primal nodes,
        # so the discrete sup undershoots by at most c h^2 / 2
        expected = quadratic(g, c=0.5).values
        h = g.spacing
        assert np.all(pair.dual.values <= expected + 1e-12)
        interior = np.abs(g.axis()) < 5.0
        assert np.max(np.abs(pair.dual.values[interior]
                             - expected[interior])) <= h ** 2

    def test_fenchel_young_on_nodes(self):
        g = build_grid(2, 4.0, 31)
        V = GridFunction.from_callable(
            g, lambda x: np.sum(np.abs(x) ** 3, axis=-1) / 3)
        pair = legendre_conjugate(V)
        x = g.coords()
        # V(x) + V*(y) >= <x, y> for every node pair (spot check a slice)
        rng = np.random.default_rng(0)
        idx = rng.integers(0, x.shape[0], size=200)
        jdx = rng.integers(0, x.shape[0], size=200)
        lhs = V.values.ravel()[idx] + pair.dual.values.ravel()[jdx]
        rhs = np.sum(x[idx] * x[jdx], axis=1)
        assert np.all(lhs >= rhs - 1e-10)

    def test_indicator_conjugate_is_support_function(self):
        g = build_grid(1, 2.0, 41)
        vals = np.where(np.abs(g.axis()) <= 1.0, 0.0, np.inf)
        pair = legendre_conjugate(GridFunction(g, vals))
        y = g.axis()
        assert np.allclose(pair.dual.values, np.abs(y), atol=1e-12)

    def test_linear_flags_boundary(self):
        g = build_grid(1, 3.0, 61)
        V = GridFunction.from_callable(g, lambda x: 2.0 * x[..., 0])
        pair = legendre_conjugate(V)
        assert pair.boundary_flagged
        with pytest.raises(ConjugateUnboundedError):
            legendre_conjugate(V, strict=True)

    def test_all_inf_rejected(self):
        g = build_grid(1, 1.0, 11)
        with pytest.raises(ValueError):
            legendre_conjugate(GridFunction(g, np.full(11, np.inf)))


class TestConvexify:
    def test_biconjugate_below(self):
        g = build_grid(1, 4.0, 81)
        rng = np.random.default_rng(3)
        V = GridFunction(g, rng.uniform(0, 5, size=81))
        env = convexify(V)
        assert np.all(env.values <= V.values + 1e-12)
        assert is_discretely_convex(env, tol=1e-9)

    def test_convex_input_recovered(self):
        g = build_grid(1, 4.0, 81)
        V = quadratic(g)
        env = convexify(V)
        assert np.max(np.abs(env.values - V.values)) <= g.spacing ** 2

    def test_double_well_flat_envelope(self):
        g = build_grid(1, 4.0, 81)
        V = GridFunction.from_callable(
            g, lambda x: np.minimum((x[..., 0] - 1) ** 2,
                                    (x[..., 0] + 1) ** 2))
        env = convexify(V)
        between = np.abs(g.axis()) <= 1.0
        assert np.all(np.abs(env.values[between]) <= 1e-10)
        # beyond |x| = 3 the gradient exceeds the dual box and the
        # envelope is legitimately linearized, so compare inside only
        outside = (np.abs(g.axis()) > 1.0) & (np.abs(g.axis()) <= 3.0)
        assert np.allclose(env.values[outside], V.values[outside],
                           atol=1e-10)


class TestCTransform:
    def test_pair_matches_legendre(self):
        g = build_grid(1, 5.0, 101)
        V = quadratic(g)
        ct = c_transform_multimarginal([V, V], 1, 1.0)
        pair = legendre_conjugate(V)
        assert np.allclose(ct.values, pair.dual.values, atol=1e-12)

    def test_triple_quadratic_fixed_point(self):
        # v_i(x) = x^2/6 is tight for the k=3 equal-weight gain with
        # C = 1/6 applied to the plain cross term sum <x_i, x_j>
        g = build_grid(1, 4.0, 41)
        v = GridFunction.from_callable(g, lambda x: x[..., 0] ** 2 / 6)
        ct = c_transform_multimarginal([v, v, v], 0, 1.0 / 6.0)
        assert np.all(ct.values <= v.values + 1e-12)
        center = np.abs(g.axis()) < 2.0
        assert np.max(np.abs(ct.values[center] - v.values[center])) \
            <= g.spacing ** 2

    def test_budget_guard(self):
        g = build_grid(2, 3.0, 41)
        V = quadratic(g)
        with pytest.raises(InstanceTooLargeError):
            c_transform_multimarginal([V, V, V], 0, 1.0, budget=1000)


class TestFiniteDifferences:
    def test_gradient_of_quadratic(self):
        g = build_grid(2, 3.0, 31)
        V = quadratic(g)
        grad, ok = finite_diff_gradient(V)
        x = g.coords().reshape(g.shape + (2,))
        assert ok.all()
        assert np.allclose(grad, x, atol=1e-9)

    def test_hessian_of_quadratic(self):
        g = build_grid(2, 3.0, 31)
        V = quadratic(g, c=3.0)
        hess, ok = finite_diff_hessian(V)
        assert ok.all()
        assert np.allclose(hess, 3.0 * np.eye(2), atol=1e-8)

    def test_inf_stencil_excluded(self):
        g = build_grid(1, 2.0, 21)
        vals = quadratic(g).values.copy()
        vals[0] = np.inf
        grad, ok = finite_diff_gradient(GridFunction(g, vals))
        assert not ok[0] and not ok[1]
        assert ok[2:].all()


class TestDiscreteConvexity:
    def test_convex_accepted(self):
        g = build_grid(2, 3.0, 21)
        assert is_discretely_convex(quadratic(g))

    def test_concave_rejected(self):
        g = build_grid(1, 3.0, 21)
        V = GridFunction.from_callable(g, lambda x: -x[..., 0] ** 2)
        assert not is_discretely_convex(V)
