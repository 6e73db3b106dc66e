import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import interval_mass_quad, norm_sf, rect_prob_quad, rect_prob_tensor
from subpop_lp._normal import Phi, Phi_inv, cell_masses, interval_mass
from subpop_lp.actions import TESTING
from subpop_lp.kernel import Rect, RectGrid, integrate_prior, objective_coeff, rect_prob, risk_arrays
from subpop_lp.losses import IndicatorLoss
from subpop_lp.priors import NormalComponent, PointMass, Prior
from subpop_lp.trial import H02, H0C


class TestNormal:
    def test_far_tail_relative_accuracy(self):
        # upper-tail masses keep full relative precision
        for x in (6.5, 10.0, 20.0, 30.0):
            got = float(interval_mass(x, np.inf))
            assert got == pytest.approx(norm_sf(x), rel=1e-13)

    def test_interval_vs_quadrature(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            lo = rng.uniform(-9, 9)
            hi = lo + rng.uniform(0, 3)
            assert float(interval_mass(lo, hi)) == pytest.approx(interval_mass_quad(lo, hi), abs=1e-14)

    def test_quantile_roundtrip(self):
        p = np.linspace(1e-6, 1 - 1e-6, 101)
        assert np.allclose(Phi(Phi_inv(p)), p, atol=1e-15)

    def test_cell_masses_sum_to_one_with_infinite_ends(self):
        e = np.r_[-np.inf, np.linspace(-3, 3, 13), np.inf]
        for d in (-2.0, 0.0, 1.3):
            assert cell_masses(e, d).sum() == pytest.approx(1.0, abs=1e-15)

    def test_cell_masses_vectorized_shape(self):
        e = np.linspace(-1, 1, 5)
        out = cell_masses(e, np.array([0.0, 0.5, 1.0]))
        assert out.shape == (3, 4)
        assert np.allclose(out[1], cell_masses(e, 0.5))


class TestRectGrid:
    def test_cell_counts_include_extra_layer(self):
        g = RectGrid(0.1, 5.0)
        assert g.shape == (101, 101)
        assert RectGrid(0.02, 5.0).shape == (501, 501)
        assert g.edges[0][0] == pytest.approx(-5.0)
        assert g.edges[0][-1] == pytest.approx(5.1)

    def test_rejects_nondividing_tau(self):
        with pytest.raises(ValueError):
            RectGrid(0.3, 5.0)

    def test_probs_factor(self):
        g = RectGrid(0.5, 2.0)
        P = g.probs(0.3, -0.7)
        i, j = 3, 5
        r = g.rect(i, j)
        assert P[i, j] == pytest.approx(rect_prob(0.3, -0.7, r), abs=1e-16)

    def test_row_major_index(self):
        g = RectGrid(1.0, 2.0)
        assert g.flat_index(2, 3) == 2 * g.shape[1] + 3
        assert [r.index for r in g.rects()][:2] == [(-2, -2), (-2, -1)]


class TestRectProb:
    def test_thousand_random_rectangles_vs_quadrature(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            d1, d2 = rng.uniform(-4, 6, 2)
            lo1, lo2 = rng.uniform(-6, 6, 2)
            w1, w2 = rng.uniform(0.01, 2.0, 2)
            r = Rect(lo1, lo1 + w1, lo2, lo2 + w2, (0, 0))
            worst = max(worst, abs(rect_prob(d1, d2, r) - rect_prob_quad(d1, d2, r.lo1, r.hi1, r.lo2, r.hi2)))
        assert worst <= 1e-10

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-4, 4), st.floats(-4, 4),
           st.floats(0.05, 3), st.floats(0.05, 3))
    @settings(max_examples=60, deadline=None)
    def test_against_tensor_rule(self, d1, d2, lo1, lo2, w1, w2):
        r = Rect(lo1, lo1 + w1, lo2, lo2 + w2, (0, 0))
        assert rect_prob(d1, d2, r) == pytest.approx(rect_prob_tensor(d1, d2, r.lo1, r.hi1, r.lo2, r.hi2), abs=1e-10)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=50, deadline=None)
    def test_translation_invariance(self, d1, d2, s1, s2):
        r = Rect(-0.5, 0.7, 0.1, 1.3, (0, 0))
        assert rect_prob(d1, d2, r) == pytest.approx(rect_prob(d1 + s1, d2 + s2, r.shifted(s1, s2)), abs=1e-14)


class TestCoefficients:
    def test_integrate_prior_normal_moments(self):
        prior = Prior(((1.0, NormalComponent(1.0, -2.0, 0.5, 2.0)),))
        assert integrate_prior(lambda a, b: a * a, prior) == pytest.approx(1.25, rel=1e-10)
        assert integrate_prior(lambda a, b: b, prior) == pytest.approx(-2.0, rel=1e-10)

    def test_point_mass_coefficients_exact(self):
        loss = IndicatorLoss(1.0, 1.0)
        prior = Prior(((0.5, PointMass(1.5, 0.0)), (0.5, PointMass(1.5, 2.0))))
        g = RectGrid(1.0, 2.0)
        R = risk_arrays(g, loss, prior, TESTING.actions)
        i, j = 2, 3
        r = g.rect(i, j)
        a = TESTING.index({H02, H0C})
        # L({H02,H0C}) = 1[d1 >= 1]: both atoms have d1 = 1.5
        expect = 0.5 * rect_prob(1.5, 0.0, r) + 0.5 * rect_prob(1.5, 2.0, r)
        assert R[i, j, a] == pytest.approx(expect, abs=1e-15)

    def test_normal_prior_coefficient_vs_brute_force(self):
        loss = IndicatorLoss(1.0, 1.0)
        comp = NormalComponent(1.0, 0.5, 0.6, 0.4)
        prior = Prior(((1.0, comp),))
        r = Rect(0.0, 0.5, 0.5, 1.0, (0, 0))
        s = frozenset({H0C})
        got = objective_coeff(r, s, loss, prior, order=48)
        # brute force: 2-D Gauss-Legendre over the prior density on +-8 sd,
        # split at the loss thresholds
        x, w = np.polynomial.legendre.leggauss(40)

        def nodes(mu, sd, cut):
            out_x, out_w = [], []
            for lo, hi in ((mu - 8 * sd, cut), (cut, mu + 8 * sd)):
                out_x.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
                out_w.append(0.5 * (hi - lo) * w)
            z = np.concatenate(out_x)
            return z, np.concatenate(out_w) * np.exp(-0.5 * ((z - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

        z1, w1 = nodes(1.0, 0.6, 1.0)
        z2, w2 = nodes(0.5, 0.4, 1.0)
        total = 0.0
        for a, wa in zip(z1, w1):
            for b, wb in zip(z2, w2):
                L = float(a >= 1.0) + float(b >= 1.0)
                total += wa * wb * L * rect_prob_quad(a, b, 0.0, 0.5, 0.5, 1.0)
        assert got == pytest.approx(total, abs=1e-10)
