"""Valuation pipeline tests: closest features, lookups, combination, softmax.

Expected values for the combination test were recomputed by expanding the
weighted sum by hand; the published two-decimal figures are checked against
the same vectors with a rounding tolerance.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogverify import (
    HumanPosition,
    Location,
    Movement,
    Objective,
    Orientation,
    Situation,
    closest_relevant,
    combine,
    lookup,
    objective_movement_values,
    relevant_features,
    softmax,
    unique_closest,
)
from cogverify.behavior import NEG_INF
from cogverify.scenario import Environment, Feature, FeatureType, GoalRegion, ObjectiveWeights

NEAR_EXACT = 1e-12


def test_relevant_features_initial(situation_initial, toy_features):
    got = relevant_features(situation_initial, Objective.FOLLOW)
    assert got == {toy_features[i] for i in (1, 2, 3, 4)}
    got = relevant_features(situation_initial, Objective.AVOID)
    assert got == {toy_features[i] for i in (5, 6, 7)}


def test_relevant_features_empty_after_collecting(toy_spec, toy_features):
    present = frozenset(f for f in toy_spec.env.features
                        if f.ftype is not FeatureType.LITTER)
    s = Situation(toy_spec.init_h, present)
    assert relevant_features(s, Objective.COLLECT) == frozenset()


def test_closest_relevant_tie(situation_mid, toy_features):
    assert closest_relevant(situation_mid, Objective.AVOID) == {
        toy_features[5], toy_features[6]
    }


def test_closest_relevant_singleton(situation_initial, toy_features):
    assert closest_relevant(situation_initial, Objective.FOLLOW) == {toy_features[1]}
    assert closest_relevant(situation_initial, Objective.AVOID) == {toy_features[6]}


def test_closest_relevant_empty(toy_spec):
    s = Situation(toy_spec.init_h, frozenset())
    assert closest_relevant(s, Objective.COLLECT) == frozenset()


def test_unique_closest_prefers_smaller_angle(situation_mid, toy_features):
    # |bearing(f5)| ~ 26 deg beats |bearing(f6)| ~ 63 deg.
    assert unique_closest(situation_mid, Objective.AVOID) == toy_features[5]


def test_unique_closest_left_over_right():
    left = Feature(FeatureType.OBSTACLE, Location(1, 3), 0)
    right = Feature(FeatureType.OBSTACLE, Location(3, 3), 1)
    s = Situation(HumanPosition(Location(2, 1), Orientation(2)), frozenset({left, right}))
    assert unique_closest(s, Objective.AVOID) == left


def test_unique_closest_singleton_and_empty(situation_initial, toy_features, toy_spec):
    assert unique_closest(situation_initial, Objective.FOLLOW) == toy_features[1]
    bare = Situation(toy_spec.init_h, frozenset())
    assert unique_closest(bare, Objective.AVOID) is None


def test_unique_closest_member_of_closest(situation_mid):
    for o in Objective:
        close = closest_relevant(situation_mid, o)
        if close:
            assert unique_closest(situation_mid, o) in close


def test_lookup_fragment_cells(toy_q):
    d = math.sqrt(5)
    assert lookup(toy_q, Objective.AVOID, Movement.LEFT, math.radians(-60), d).value == -0.01
    assert lookup(toy_q, Objective.AVOID, Movement.STRAIGHT, math.radians(26), d).value == -0.67
    assert lookup(toy_q, Objective.AVOID, Movement.RIGHT, math.radians(26), d).value == -0.32


def test_objective_movement_values_published_example(situation_mid, toy_q, toy_features):
    got = objective_movement_values(situation_mid, Objective.AVOID, toy_q)
    by_feature = {f: vec for f, vec, _conf in got}
    assert set(by_feature) == {toy_features[5], toy_features[6]}
    assert by_feature[toy_features[5]] == (0.0, -0.67, -0.32)
    assert by_feature[toy_features[6]] == (-0.01, 0.0, 0.0)


def test_objective_movement_values_empty(toy_spec, toy_q):
    s = Situation(toy_spec.init_h, frozenset())
    assert objective_movement_values(s, Objective.COLLECT, toy_q) == ()


def test_objective_movement_values_constant_zero_table(toy_spec):
    from cogverify import parse_qtables
    from tests.test_scenario import TOTAL_TABLES

    q = parse_qtables(TOTAL_TABLES.replace("1 2", "0 0"))
    w = Feature(FeatureType.WAYPOINT, Location(2, 2), 0)
    s = Situation(HumanPosition(Location(2, 1), Orientation(2)), frozenset({w}))
    got = objective_movement_values(s, Objective.FOLLOW, q)
    assert got == ((w, (0.0, 0.0, 0.0), True),)


def test_combine_published_example(situation_mid, toy_q, toy_spec, toy_features):
    weights = ObjectiveWeights(0.414, 0.215, 0.369)
    valuation = combine(situation_mid, toy_q, weights, toy_spec.env)
    assert len(valuation) == 2
    by_sets = {entry.features: entry.values for entry in valuation}
    combo_a = frozenset({toy_features[5], toy_features[8], toy_features[2]})
    combo_b = frozenset({toy_features[6], toy_features[8], toy_features[2]})
    assert set(by_sets) == {combo_a, combo_b}
    # Exact expansion of the weighted sums:
    #   0.414*[0,-0.67,-0.32] + 0.215*[2.5,2.4,2] + 0.369*[0,1.14,0]
    #   0.414*[-0.01,0,0]     + 0.215*[2.5,2.4,2] + 0.369*[0,1.14,0]
    assert by_sets[combo_a] == pytest.approx((0.5375, 0.65928, 0.29752), abs=NEAR_EXACT)
    assert by_sets[combo_b] == pytest.approx((0.53336, 0.93666, 0.43), abs=NEAR_EXACT)
    # The published figures are printed to two loosely rounded decimals.
    assert by_sets[combo_a] == pytest.approx((0.53, 0.66, 0.3), abs=0.015)
    assert by_sets[combo_b] == pytest.approx((0.53, 0.93, 0.42), abs=0.015)


def test_combine_single_objective_scaling(toy_q, toy_spec, toy_features):
    s = Situation(HumanPosition(Location(2, 0), Orientation(2)),
                  frozenset({toy_features[1]}))
    weights = ObjectiveWeights(0.0, 0.0, 1.0)
    valuation = combine(s, toy_q, weights, toy_spec.env)
    assert len(valuation) == 1
    assert valuation[0].features == {toy_features[1]}
    assert valuation[0].values == pytest.approx((0.0, 1.14, 0.0), abs=NEAR_EXACT)


def test_combine_invalid_movements_masked(toy_q, toy_spec, toy_features):
    # Facing north-west at the left edge: LEFT (west) and STRAIGHT
    # (north-west) leave the grid, RIGHT (north) stays.
    s = Situation(HumanPosition(Location(0, 1), Orientation(3)),
                  frozenset({toy_features[1]}))
    valuation = combine(s, toy_q, toy_spec.weights, toy_spec.env)
    assert len(valuation) == 1
    values = valuation[0].values
    assert values[0] == NEG_INF and values[1] == NEG_INF
    assert values[2] != NEG_INF


def test_combine_all_invalid_removes_vector(toy_q, toy_spec, toy_features):
    # Facing south-west in the corner: every movement leaves the grid.
    s = Situation(HumanPosition(Location(0, 0), Orientation(5)),
                  frozenset({toy_features[1]}))
    assert combine(s, toy_q, toy_spec.weights, toy_spec.env) == ()


def test_combine_empty_objective_contributes_zero_vector(toy_q, toy_spec):
    # Independent oracle: hand-expand the cross product on a 3-feature scene
    # and compare against combine() after removing one objective's features.
    obstacle = Feature(FeatureType.OBSTACLE, Location(1, 3), 0)
    litter = Feature(FeatureType.LITTER, Location(3, 3), 1)
    waypoint = Feature(FeatureType.WAYPOINT, Location(2, 3), 2)
    pos = HumanPosition(Location(2, 1), Orientation(2))
    weights = toy_spec.weights
    with_all = Situation(pos, frozenset({obstacle, litter, waypoint}))
    without_litter = Situation(pos, frozenset({obstacle, waypoint}))

    def manual(situation):
        factors = []
        for o in (Objective.AVOID, Objective.COLLECT, Objective.FOLLOW):
            entries = objective_movement_values(situation, o, toy_q)
            factors.append(entries or ((None, (0.0, 0.0, 0.0), True),))
        out = {}
        for combo in itertools.product(*factors):
            fs = frozenset(f for f, _v, _c in combo if f is not None)
            vec = tuple(
                sum(w * v[i] for (_f, v, _c), w in
                    zip(combo, (weights.avoid, weights.collect, weights.follow)))
                for i in range(3)
            )
            out[fs] = vec
        return out

    for situation in (with_all, without_litter):
        expected = manual(situation)
        got = {e.features: e.values for e in combine(situation, toy_q, weights, toy_spec.env)}
        assert got == pytest.approx(expected)


def test_combine_size_bound(situation_mid, toy_q, toy_spec):
    valuation = combine(situation_mid, toy_q, toy_spec.weights, toy_spec.env)
    bound = 1
    for o in Objective:
        bound *= max(1, len(closest_relevant(situation_mid, o)))
    assert 0 < len(valuation) <= bound


def test_combine_ignores_non_closest_features(situation_mid, toy_q, toy_spec, toy_features):
    # Dropping a feature that is closest for no objective leaves the
    # valuation untouched.
    slim = Situation(situation_mid.pos,
                     situation_mid.present - {toy_features[7], toy_features[4]})
    a = combine(situation_mid, toy_q, toy_spec.weights, toy_spec.env)
    b = combine(slim, toy_q, toy_spec.weights, toy_spec.env)
    assert a == b


# ---------------------------------------------------------------------------
# softmax


def test_softmax_uniform_on_constant_vectors():
    for c in (-3.0, 0.0, 7.5):
        for tau in (0.01, 1.0, 100.0):
            assert softmax((c, c, c), tau) == pytest.approx((1 / 3,) * 3, abs=1e-12)


def test_softmax_exact_zero_for_neg_inf():
    assert softmax((0.0, NEG_INF, NEG_INF), 1.0) == (1.0, 0.0, 0.0)
    out = softmax((0.5, NEG_INF, 0.5), 2.0)
    assert out[1] == 0.0
    assert out[0] == pytest.approx(0.5, abs=1e-12)


def test_softmax_direct_formula_example():
    # Direct evaluation of exp(x/tau)/sum as an independent oracle.
    got = softmax((1.0, 0.0, 0.0), 0.5)
    e2 = math.exp(2.0)
    assert got == pytest.approx((e2 / (e2 + 2), 1 / (e2 + 2), 1 / (e2 + 2)), abs=1e-12)
    assert got[0] == pytest.approx(0.7870, abs=5e-5)


def test_softmax_errors():
    with pytest.raises(ValueError):
        softmax((NEG_INF, NEG_INF, NEG_INF), 1.0)
    with pytest.raises(ValueError):
        softmax((1.0, 2.0, 3.0), 0.0)


@given(
    st.lists(st.floats(min_value=-50, max_value=50), min_size=2, max_size=5),
    st.floats(min_value=1e-3, max_value=1e3),
    st.floats(min_value=-20, max_value=20),
)
def test_softmax_sums_shift_invariance_argmax(values, tau, shift):
    probs = softmax(values, tau)
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)
    assert all(p >= 0 for p in probs)
    shifted = softmax([v + shift for v in values], tau)
    assert shifted == pytest.approx(probs, abs=1e-10)
    assert int(np.argmax(probs)) == int(np.argmax(values))


def test_softmax_temperature_limits():
    values = (1.0, 0.0, -1.0)
    cold = softmax(values, 1e-4)
    assert cold[0] > 1 - 1e-9
    hot = softmax(values, 1000 * (max(values) - min(values)))
    assert hot == pytest.approx((1 / 3,) * 3, abs=0.01)


def test_softmax_monotone_in_inverse_temperature():
    # For a fixed two-entry gap the max probability grows as tau shrinks.
    taus = (10.0, 1.0, 0.5, 0.1, 0.01)
    probs = [softmax((1.0, 0.0), tau)[0] for tau in taus]
    assert probs == sorted(probs)
