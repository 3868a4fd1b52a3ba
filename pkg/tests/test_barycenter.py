"""Wasserstein barycenters: multimarginal pushforward vs quantile
averaging, the barycenter functional, and the first-order identity."""

import numpy as np
import pytest

from santalo.barycenter import (barycenter_1d_quantile,
                                barycenter_functional,
                                barycenter_identity_residual,
                                barycenter_via_multimarginal)
from santalo.grids import DiscreteMeasure, GridFunction, build_grid, sample_density
from santalo.transport import w2_squared

TRIPLE_SIGMAS = (0.8, 1.0, 1.25)


def gaussian_measure(sigma, m=41, L=5.0):
    g = build_grid(1, L, m)
    V = GridFunction.from_callable(
        g, lambda x: 0.5 * (x[..., 0] / sigma) ** 2)
    return sample_density(V)


def w2_between(a, b):
    return np.sqrt(w2_squared(a.measure, b.measure).cost)


class TestQuantileRoute:
    def test_gaussian_triple_matches_scale_mixture(self):
        # barycenter of centered Gaussians is the Gaussian with the
        # lambda-averaged standard deviation
        ms = [gaussian_measure(s, m=201, L=8.0) for s in TRIPLE_SIGMAS]
        bary = barycenter_1d_quantile(ms, np.full(3, 1 / 3))
        sbar = np.mean(TRIPLE_SIGMAS)
        assert bary.measure.mean()[0] == pytest.approx(0.0, abs=1e-10)
        assert bary.measure.second_moment() == pytest.approx(
            sbar ** 2, abs=2e-2)

    def test_identical_inputs_fixed_point(self):
        m = gaussian_measure(1.0, m=201, L=8.0)
        bary = barycenter_1d_quantile([m, m], np.array([0.5, 0.5]))
        plan = w2_squared(bary.measure, m)
        assert plan.cost <= (2 * 8.0 / 200) ** 2


class TestMultimarginalRoute:
    def test_matches_quantile_on_gaussian_triple(self):
        ms = [gaussian_measure(s) for s in TRIPLE_SIGMAS]
        h = 2 * 5.0 / 40
        lam = np.full(3, 1 / 3)
        mm = barycenter_via_multimarginal(ms, lam, merge_spacing=h)
        qt = barycenter_1d_quantile(ms, lam)
        assert w2_between(mm, qt) <= 3 * h

    def test_matches_quantile_on_random_triples(self):
        rng = np.random.default_rng(17)
        h = 0.05
        for _ in range(10):
            ms = [DiscreteMeasure.normalized(
                rng.uniform(-2, 2, size=(12, 1)),
                rng.uniform(0.1, 1.0, size=12)) for _ in range(3)]
            lam = rng.uniform(0.2, 1.0, size=3)
            lam /= lam.sum()
            mm = barycenter_via_multimarginal(ms, lam, merge_spacing=h)
            qt = barycenter_1d_quantile(ms, lam)
            assert w2_between(mm, qt) <= 3 * h

    def test_invalid_weights_rejected(self):
        ms = [gaussian_measure(1.0), gaussian_measure(1.2)]
        with pytest.raises(ValueError):
            barycenter_via_multimarginal(ms, [0.7, 0.7], merge_spacing=0.1)


class TestBarycenterFunctional:
    def test_gaussian_triple_closed_form(self):
        # F(bary) = 1/2 sum lam_i (sigma_i - sbar)^2 = 0.016944...
        ms = [gaussian_measure(s, m=201, L=8.0) for s in TRIPLE_SIGMAS]
        lam = np.full(3, 1 / 3)
        bary = barycenter_1d_quantile(ms, lam)
        val = barycenter_functional(ms, lam, bary.measure)
        sbar = np.mean(TRIPLE_SIGMAS)
        expected = 0.5 * np.mean([(s - sbar) ** 2 for s in TRIPLE_SIGMAS])
        assert expected == pytest.approx(0.016944, abs=1e-6)
        assert val == pytest.approx(expected, abs=1.5e-3)

    def test_identity_residual_small_at_barycenter(self):
        ms = [gaussian_measure(s, m=101, L=6.0) for s in TRIPLE_SIGMAS]
        lam = np.full(3, 1 / 3)
        bary = barycenter_1d_quantile(ms, lam, n_quantiles=128)
        res = barycenter_identity_residual(ms, lam, bary.measure)
        shifted = DiscreteMeasure(bary.measure.points + 0.5,
                                  bary.measure.weights)
        res_shifted = barycenter_identity_residual(ms, lam, shifted)
        assert res < 0.05
        assert res_shifted > 5 * res
