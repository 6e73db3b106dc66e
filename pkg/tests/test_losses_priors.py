import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpop_lp.actions import ALL_SUBSETS, DECISION, TESTING, action_label
from subpop_lp.losses import (DecisionLoss, IndicatorLoss, ProportionalLoss, ZeroLoss, check_bounded,
                              make_loss)
from subpop_lp.priors import NormalComponent, PointMass, Prior, builtin_prior
from subpop_lp.trial import H01, H02, H0C, TrialDesign, n_min

D = (2.0, 3.0)


class TestActions:
    def test_testing_space_is_coherent(self):
        assert len(TESTING.actions) == 7
        assert frozenset({H01, H02}) not in TESTING.actions
        for a in TESTING.actions:
            if {H01, H02} <= a:
                assert H0C in a

    def test_sizes_and_labels(self):
        assert len(ALL_SUBSETS.actions) == 8
        assert DECISION.labels() == ["none", "1", "2", "1+2"]
        assert action_label({H0C, H01}) == "H01+H0C" or "+" in action_label({H0C, H01})
        assert TESTING.actions[0] == frozenset()


class TestIndicatorLoss:
    def test_values_on_quadrants(self):
        L = IndicatorLoss(*D)
        assert L(set(), 2.5, 3.5) == 2.0
        assert L({H01}, 2.5, 3.5) == 1.0
        assert L({H01, H02, H0C}, 2.5, 3.5) == 0.0
        assert L(set(), 1.9, 3.5) == 1.0
        # threshold belongs to the alternative side
        assert L(set(), 2.0, 0.0) == 1.0

    def test_h0c_alone_does_not_reduce_loss(self):
        L = IndicatorLoss(*D)
        assert L({H0C}, 5.0, 5.0) == L(set(), 5.0, 5.0)

    def test_vectorized(self):
        L = IndicatorLoss(*D)
        d = np.array([0.0, 2.0, 4.0])
        assert np.array_equal(L({H02}, d, d), np.array([0.0, 1.0, 1.0]))

    def test_rejects_unknown_action(self):
        with pytest.raises(ValueError):
            DecisionLoss(*D)({H01}, 0.0, 0.0)

    @given(st.floats(-5, 8), st.floats(-5, 8))
    @settings(max_examples=100, deadline=None)
    def test_decomposes_by_axis(self, d1, d2):
        L = IndicatorLoss(*D)
        for a in ALL_SUBSETS.actions:
            expect = (H01 not in a) * (d1 >= D[0]) + (H02 not in a) * (d2 >= D[1])
            assert L(a, d1, d2) == expect


class TestOtherLosses:
    def test_proportional(self):
        L = ProportionalLoss(*D)
        assert L(set(), 2.5, 1.0) == pytest.approx(2.5)
        assert L({H02}, 2.5, 4.0) == pytest.approx(2.5)
        assert L({H01, H02, H0C}, 9.0, 9.0) == 0.0

    def test_proportional_unbounded_without_box(self):
        assert ProportionalLoss(*D).max_value() == math.inf
        prior = Prior(((1.0, NormalComponent(1.0, 1.0, 1.0, 1.0)),))
        assert check_bounded(ProportionalLoss(*D), prior) == pytest.approx(18.0)

    def test_decision_loss_penalties(self):
        L = DecisionLoss(*D, l1_fp=2.0, l1_fn=1.0, l2_fp=3.0, l2_fn=0.5)
        assert L({1, 2}, 0.0, 0.0) == pytest.approx(5.0)
        assert L(set(), 5.0, 5.0) == pytest.approx(1.5)
        assert L({1}, 5.0, 0.0) == pytest.approx(0.0)
        assert L({2}, 5.0, 0.0) == pytest.approx(1.0 + 3.0)

    def test_decision_rejects_negative(self):
        with pytest.raises(ValueError):
            DecisionLoss(*D, l1_fp=-1.0)

    def test_make_loss(self):
        s = TrialDesign(p1=0.5, n=n_min(TrialDesign(p1=0.5))).scale()
        assert isinstance(make_loss("indicator", s), IndicatorLoss)
        L = make_loss("decision", s, l_fp=2.0)
        assert L.l1_fp == L.l2_fp == 2.0 and L.l1_fn == 1.0
        assert make_loss("zero", s).is_zero()
        with pytest.raises(ValueError):
            make_loss("nope", s)

    def test_zero_loss(self):
        assert ZeroLoss()({H01}, 3.0, 3.0) == 0.0


class TestPriors:
    def test_weights_validated(self):
        with pytest.raises(ValueError):
            Prior(((0.5, PointMass(0, 0)), (0.6, PointMass(1, 1))))
        with pytest.raises(ValueError):
            Prior(((1.5, PointMass(0, 0)), (-0.5, PointMass(1, 1))))
        with pytest.raises(ValueError):
            NormalComponent(0, 0, 0.0, 1.0)

    def test_builtin_centres_and_weights(self):
        s = TrialDesign(p1=0.63, n=40.0).scale()
        p = builtin_prior("asym", s)
        assert p.weights.tolist() == [0.2, 0.35, 0.1, 0.35]
        means = [c.mean for _, c in p.components]
        assert means == [(0.0, 0.0), (s.delta1_min, 0.0), (0.0, s.delta2_min), (s.delta1_min, s.delta2_min)]
        assert builtin_prior("sym-normal", s).components[1][1].sd == (s.delta1_min / 2, s.delta2_min / 2)
        with pytest.raises(ValueError):
            builtin_prior("other", s)

    def test_atoms_integrate_normal_moments(self):
        p = Prior(((0.3, PointMass(1.0, 2.0)), (0.7, NormalComponent(-1.0, 0.5, 0.8, 1.5))))
        w, a, b = p.atoms(((0.0,), (1.0,)))
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert w @ a == pytest.approx(0.3 - 0.7, abs=1e-12)
        assert w @ (b - 0.5) ** 2 == pytest.approx(0.3 * 2.25 + 0.7 * 2.25, abs=1e-10)

    def test_dict_roundtrip(self):
        p = Prior(((0.4, PointMass(1.0, 2.0)), (0.6, NormalComponent(0.0, 0.0, 1.0, 2.0))))
        assert Prior.from_dict(p.to_dict()) == p

    def test_support_box(self):
        p = Prior(((0.5, PointMass(1.0, 2.0)), (0.5, NormalComponent(0.0, 0.0, 1.0, 0.5))))
        assert p.support_box() == ((-8.0, 8.0), (-4.0, 4.0))
