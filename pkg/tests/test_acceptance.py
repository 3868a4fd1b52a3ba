"""Acceptance gate: twelve end-to-end criteria, each printing a single
pass/fail line.  Tolerances are stated inline and are not tuned per
instance."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from santalo.barycenter import barycenter_1d_quantile, barycenter_via_multimarginal
from santalo.flow import bs_iterate_pair, multimarginal_monotone_step
from santalo.functionals import RhoProfile, bs_pair_functional
from santalo.grids import (DiscreteMeasure, GridFunction, build_grid,
                           sample_density)
from santalo.instances import GAUSSIAN_TRIPLE_SIGMAS, generate_instance
from santalo.transport import LP_GAP_TOL, sinkhorn, w2_squared
from santalo.verifiers import (ConvexBodyRadial, equality_diagnostics,
                               verify_bsunc, verify_displacement_convexity,
                               verify_pointwise_pl, verify_radial_bs,
                               verify_bs_bodies, verify_talagrand_barycenter)

# frozen reference: continuum squared W2 distance between the centered
# Gaussians with variances 1 and 4 truncated to [-8, 8]; the truncation
# contributes an h-independent -2.1e-3 offset from the untruncated value
# of 1, so the refinement-order check is made against this number
W2_TRUNCATED_GAUSSIANS = 0.997881017589379


@contextmanager
def criterion(num, label):
    try:
        yield
    except Exception:
        print(f"criterion {num:2d} ({label}): FAIL")
        raise
    print(f"criterion {num:2d} ({label}): PASS")


def gaussian_potential(grid):
    return GridFunction.from_callable(
        grid, lambda x: 0.5 * np.sum(x ** 2, axis=-1))


def gauss_fns(grid, cs):
    return [GridFunction.from_callable(
        grid, lambda x, c=c: c * np.exp(-0.5 * np.sum(x ** 2, axis=-1)))
        for c in cs]


def test_criterion_1_pair_functional_ceiling():
    with criterion(1, "pair-functional ceiling"):
        g1 = build_grid(1, 8.0, 201)
        g2 = build_grid(2, 6.0, 61)
        evens = [
            GridFunction.from_callable(
                g1, lambda x: 0.5 * x[..., 0] ** 2 + 0.1 * x[..., 0] ** 4),
            GridFunction.from_callable(g1, lambda x: np.abs(x[..., 0])),
            GridFunction.from_callable(
                g1, lambda x: np.cosh(x[..., 0]) - 1.0),
        ]
        start = time.perf_counter()
        v1 = bs_pair_functional(gaussian_potential(g1)).value
        v2 = bs_pair_functional(gaussian_potential(g2)).value
        even_vals = [bs_pair_functional(V).value for V in evens]
        elapsed = time.perf_counter() - start
        assert abs(v1 - 2 * np.pi) <= 1e-4
        assert abs(v2 - (2 * np.pi) ** 2) <= 1e-3
        for v in even_vals:
            assert v <= 2 * np.pi * (1 + 1e-3)
        assert elapsed / 5 < 1.0


def test_criterion_2_equality_families():
    with criterion(2, "scaled-Gaussian equality families"):
        for k in (3, 4):
            rho = RhoProfile.exponential(1.0 / (k - 1), k_context=k)
            for n in (1, 2):
                grid = build_grid(n, 8.0 if n == 1 else 5.0,
                                  201 if n == 1 else 41)
                cs = np.exp(np.linspace(-0.5, 0.5, k))
                cs /= np.prod(cs) ** (1.0 / k)
                fns = gauss_fns(grid, cs)
                rep = verify_bsunc(fns, rho)
                assert rep.passed
                assert abs(rep.slack) / rep.rhs <= 1e-3
                diag = equality_diagnostics(fns, rho)
                assert np.allclose(diag["c"], cs, atol=1e-4)


def test_criterion_3_random_corpus():
    with criterion(3, "random unconditional corpus 4x100"):
        start = time.perf_counter()
        for k in (3, 4):
            for n in (1, 2):
                for seed in range(100):
                    inst = generate_instance("unconditional-mixed",
                                             seed=seed, k=k, n=n)
                    rep = verify_bsunc(inst.nonneg_fns(), inst.rho)
                    assert rep.passed, (k, n, seed, rep.slack, rep.tol)
                    assert rep.mode == "theorem"
        assert time.perf_counter() - start < 300.0


def test_criterion_4_sinkhorn_vs_lp():
    with criterion(4, "entropic-vs-exact transport"):
        rng = np.random.default_rng(5)
        for _ in range(25):
            mk = lambda: DiscreteMeasure.normalized(
                rng.uniform(-2, 2, size=(10, 1)),
                rng.uniform(0.1, 1.0, size=10))
            mu, nu = mk(), mk()
            lp = w2_squared(mu, nu)
            assert lp.dual_gap <= LP_GAP_TOL
            sk = sinkhorn(mu, nu, eps_target=1e-3)
            assert abs(sk.cost - lp.cost) <= 1e-3 * max(abs(lp.cost), 1.0)


def test_criterion_5_w2_closed_form():
    with criterion(5, "Gaussian W2 closed form + refinement order"):
        def cost(m):
            g = build_grid(1, 8.0, m)
            mu = sample_density(GridFunction.from_callable(
                g, lambda x: 0.5 * x[..., 0] ** 2))
            nu = sample_density(GridFunction.from_callable(
                g, lambda x: 0.5 * (x[..., 0] / 2.0) ** 2))
            return w2_squared(mu, nu).cost
        c201 = cost(201)
        assert abs(c201 - 1.0) <= 2e-2
        err201 = abs(c201 - W2_TRUNCATED_GAUSSIANS)
        err401 = abs(cost(401) - W2_TRUNCATED_GAUSSIANS)
        assert err401 <= 0.5 * err201


def test_criterion_6_barycenter_routes_agree():
    with criterion(6, "barycenter route agreement"):
        def gm(sigma):
            g = build_grid(1, 5.0, 41)
            return sample_density(GridFunction.from_callable(
                g, lambda x: 0.5 * (x[..., 0] / sigma) ** 2))
        h = 2 * 5.0 / 40
        ms = [gm(s) for s in GAUSSIAN_TRIPLE_SIGMAS]
        lam = np.full(3, 1 / 3)
        mm = barycenter_via_multimarginal(ms, lam, merge_spacing=h)
        qt = barycenter_1d_quantile(ms, lam)
        assert np.sqrt(w2_squared(mm.measure, qt.measure).cost) <= 3 * h
        rng = np.random.default_rng(17)
        for _ in range(10):
            ms = [DiscreteMeasure.normalized(
                rng.uniform(-2, 2, size=(12, 1)),
                rng.uniform(0.1, 1.0, size=12)) for _ in range(3)]
            lam = rng.uniform(0.2, 1.0, size=3)
            lam /= lam.sum()
            mm = barycenter_via_multimarginal(ms, lam, merge_spacing=0.05)
            qt = barycenter_1d_quantile(ms, lam)
            assert np.sqrt(w2_squared(mm.measure, qt.measure).cost) \
                <= 3 * 0.05


def test_criterion_7_barycenter_transport_entropy():
    with criterion(7, "barycenter transport-entropy bound"):
        inst = generate_instance("gaussian-triple", seed=0)
        rep = verify_talagrand_barycenter(inst.densities)
        sbar = np.mean(GAUSSIAN_TRIPLE_SIGMAS)
        lhs_oracle = 0.5 * np.mean([(s - sbar) ** 2
                                    for s in GAUSSIAN_TRIPLE_SIGMAS])
        ents = [0.5 * (s * s - 1) - np.log(s)
                for s in GAUSSIAN_TRIPLE_SIGMAS]
        rhs_oracle = 2.0 / 9.0 * np.sum(ents)
        assert abs(lhs_oracle - 0.0169) <= 1e-4
        assert abs(rhs_oracle - 0.0225) <= 1e-4
        assert abs(rep.lhs - lhs_oracle) <= 1.5e-3
        assert abs(rep.rhs - rhs_oracle) <= 1.5e-3
        assert rep.passed and rep.slack > 0
        for seed in range(25):
            inst = generate_instance("gaussian-pair", seed=seed)
            rep = verify_talagrand_barycenter(inst.densities)
            assert rep.passed, (seed, rep.slack)


def test_criterion_8_pointwise_pl():
    with criterion(8, "pointwise product bound"):
        lam = [0.5, 0.5]
        tols = []
        for m in (101, 201, 401):
            g = build_grid(1, 8.0, m)
            fns = gauss_fns(g, [1.0, 1.0])
            rep = verify_pointwise_pl(fns, lam)
            assert rep.passed and rep.slack >= -rep.tol
            tols.append(rep.tol)
        # the grid tolerance shrinks at least linearly in h
        assert tols[1] <= 0.5 * tols[0] + 1e-12
        assert tols[2] <= 0.5 * tols[1] + 1e-12
        for seed in range(25):
            inst = generate_instance("unconditional-mixed", seed=seed,
                                     k=2, n=1)
            rep = verify_pointwise_pl(inst.nonneg_fns(), inst.lambdas)
            assert rep.passed, (seed, rep.slack, rep.tol)


def test_criterion_9_displacement_convexity():
    with criterion(9, "displacement convexity of entropy"):
        inst = generate_instance("gaussian-triple", seed=0)
        rep = verify_displacement_convexity(inst.densities, inst.lambdas)
        assert rep.passed and rep.slack >= -1e-4
        for seed in range(10):
            inst = generate_instance("shifted-gaussians", seed=seed, k=3)
            rep = verify_displacement_convexity(inst.densities,
                                                inst.lambdas)
            assert rep.passed and rep.slack >= -1e-4, (seed, rep.slack)


def test_criterion_10_monotone_flow():
    with criterion(10, "monotone iteration"):
        g = build_grid(1, 6.0, 201)
        quartic = GridFunction.from_callable(
            g, lambda x: 0.5 * x[..., 0] ** 2 + 0.2 * x[..., 0] ** 4)
        traces = bs_iterate_pair(quartic, 10)       # raises on violation
        bs = [t.bs_value for t in traces]
        assert (np.diff(bs) >= -1e-6).all() and bs[-1] > bs[0]
        dq = [t.delta_quad for t in traces]
        print(f"    delta-to-quadratic trace: {['%.3g' % d for d in dq]}"
              f" (strictly decreasing: {bool((np.diff(dq) < 0).all())})")
        gauss = bs_iterate_pair(gaussian_potential(g), 10, stop_early=False)
        assert np.ptp([t.bs_value for t in gauss]) <= 1e-4
        gq = build_grid(1, 5.0, 41)
        Vs = [GridFunction.from_callable(
            gq, lambda x: 0.5 * x[..., 0] ** 2 + 0.2 * x[..., 0] ** 4)
            for _ in range(3)]
        _, report = multimarginal_monotone_step(Vs, np.full(3, 1 / 3),
                                                C=1.5)
        assert report["slack"] > 0


def test_criterion_11_bodies():
    with criterion(11, "convex-body equality cases"):
        k = 3
        rho = RhoProfile.exponential(1.0 / (k - 1), k_context=k)
        balls = [ConvexBodyRadial.from_radial(
            2, lambda t: np.ones_like(t)) for _ in range(k)]
        rep = verify_bs_bodies(balls, rho)
        assert rep.passed
        assert abs(rep.lhs - np.pi ** k) <= 1e-3 * np.pi ** k
        assert abs(rep.slack) <= 1e-3 * rep.rhs
        rad = verify_radial_bs(balls)
        assert rad.passed
        assert abs(rad.slack) <= 1e-3 * rad.rhs


def test_criterion_12_property_suites():
    with criterion(12, "property suites headless"):
        import test_properties as props
        start = time.perf_counter()
        props.test_fenchel_young_holds_everywhere()
        props.test_fenchel_young_tight_somewhere()
        props.test_biconjugate_below_original()
        props.test_symmetrization_idempotent_and_even()
        props.test_plan_feasibility_and_weak_duality()
        props.test_report_slack_arithmetic()
        assert time.perf_counter() - start < 120.0
