"""Property-based suites over randomized inputs: conjugation laws,
symmetrization, coupling feasibility, duality, and report arithmetic."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from santalo.convexity import legendre_conjugate, convexify
from santalo.grids import (DiscreteMeasure, GridFunction, build_grid,
                           symmetrize_unconditional)
from santalo.transport import w2_squared
from santalo.verifiers import make_report

SETTINGS = dict(max_examples=25, deadline=None)


def grid_values(m=41):
    return st.lists(st.floats(-5.0, 5.0, allow_nan=False), min_size=m,
                    max_size=m)


@given(vals=grid_values())
@settings(**SETTINGS)
def test_fenchel_young_holds_everywhere(vals):
    g = build_grid(1, 4.0, 41)
    V = GridFunction(g, np.array(vals))
    pair = legendre_conjugate(V)
    x = g.axis()
    lhs = V.values[:, None] + pair.dual.values[None, :]
    assert (lhs >= np.outer(x, x) - 1e-9).all()


@given(vals=grid_values())
@settings(**SETTINGS)
def test_fenchel_young_tight_somewhere(vals):
    # the conjugate is a sup over nodes: every dual node attains
    # equality at some primal node
    g = build_grid(1, 4.0, 41)
    V = GridFunction(g, np.array(vals))
    pair = legendre_conjugate(V)
    x = g.axis()
    gap = V.values[:, None] + pair.dual.values[None, :] - np.outer(x, x)
    assert (gap.min(axis=0) <= 1e-9).all()


@given(vals=grid_values())
@settings(**SETTINGS)
def test_biconjugate_below_original(vals):
    g = build_grid(1, 4.0, 41)
    V = GridFunction(g, np.array(vals))
    env = convexify(V)
    assert (env.values <= V.values + 1e-9).all()


@given(vals=st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=49,
                     max_size=49))
@settings(**SETTINGS)
def test_symmetrization_idempotent_and_even(vals):
    g = build_grid(2, 3.0, 7)
    f = GridFunction(g, np.array(vals).reshape(7, 7))
    s1 = symmetrize_unconditional(f)
    s2 = symmetrize_unconditional(s1)
    assert np.array_equal(s1.values, s2.values)
    assert s1.is_unconditional(tol=1e-12)


measures = st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=n, max_size=n),
    st.lists(st.floats(0.05, 1.0, allow_nan=False), min_size=n, max_size=n)))


@given(a=measures, b=measures)
@settings(max_examples=15, deadline=None)
def test_plan_feasibility_and_weak_duality(a, b):
    mu = DiscreteMeasure.normalized(np.array(a[0])[:, None], np.array(a[1]))
    nu = DiscreteMeasure.normalized(np.array(b[0])[:, None], np.array(b[1]))
    plan = w2_squared(mu, nu)
    row, col = plan.marginal_errors()
    assert row <= 1e-9 and col <= 1e-9
    assert (plan.plan >= -1e-12).all()
    # weak duality: the dual objective never exceeds the primal cost
    dual = float(plan.potential_u @ mu.weights
                 + plan.potential_v @ nu.weights)
    assert dual <= plan.cost + 1e-8
    assert plan.cost >= -1e-12


@given(lhs=st.floats(-10, 10, allow_nan=False),
       rhs=st.floats(-10, 10, allow_nan=False),
       margin=st.floats(-1, 1, allow_nan=False),
       tol=st.floats(1e-9, 0.1, allow_nan=False))
@settings(**SETTINGS)
def test_report_slack_arithmetic(lhs, rhs, margin, tol):
    rep = make_report("prop", lhs, rhs, margin, "Exhaustive", tol, "h")
    assert rep.slack == rhs - lhs
    assert rep.passed == (rep.slack >= -tol and margin >= -tol)
