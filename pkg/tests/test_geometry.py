"""Kinematics unit tests, anchored on the toy-world worked examples."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogverify import (
    HumanPosition,
    Location,
    Movement,
    Orientation,
    Situation,
    direction_vector,
    distance,
    effect,
    is_valid,
    post_position,
    signed_angle,
)
from cogverify.geometry import InvalidMovementError, squared_distance
from cogverify.scenario import Environment, Feature, FeatureType, GoalRegion


def env_of(grid_x, grid_y, features=()):
    return Environment(grid_x, grid_y, tuple(features), GoalRegion())


def feat(x, y, ftype=FeatureType.WAYPOINT, fid=0):
    return Feature(ftype, Location(x, y), fid)


DIRECTION_TABLE = {
    0: (1, 0),
    1: (1, 1),
    2: (0, 1),
    3: (-1, 1),
    4: (-1, 0),
    5: (-1, -1),
    6: (0, -1),
    7: (1, -1),
}


def test_direction_vectors_match_compass_table():
    for index, vec in DIRECTION_TABLE.items():
        assert direction_vector(Orientation(index)) == vec
        assert vec != (0, 0)


def test_post_position_left_from_column():
    p = HumanPosition(Location(2, 1), Orientation(2))
    q = post_position(p, Movement.LEFT)
    assert q == HumanPosition(Location(1, 2), Orientation(3))


def test_post_position_straight_translates():
    p = HumanPosition(Location(2, 1), Orientation(2))
    assert post_position(p, Movement.STRAIGHT) == HumanPosition(Location(2, 2), Orientation(2))


def test_post_position_can_leave_grid():
    p = HumanPosition(Location(0, 0), Orientation(4))
    q = post_position(p, Movement.STRAIGHT)
    assert q.loc == Location(-1, 0)
    assert q.orient == Orientation(4)


def test_left_then_right_restores_orientation():
    p = HumanPosition(Location(3, 3), Orientation(1))
    q = post_position(post_position(p, Movement.LEFT), Movement.RIGHT)
    assert q.orient == p.orient
    assert q.loc != p.loc


def test_eight_lefts_restore_orientation():
    p = HumanPosition(Location(10, 10), Orientation(6))
    for _ in range(8):
        p = post_position(p, Movement.LEFT)
    assert p.orient == Orientation(6)


def test_is_valid_boundaries():
    env = env_of(3, 3)
    assert is_valid(HumanPosition(Location(2, 1), Orientation(2)), Movement.LEFT, env)
    assert not is_valid(HumanPosition(Location(0, 0), Orientation(4)), Movement.STRAIGHT, env)
    for m in Movement:
        assert is_valid(HumanPosition(Location(1, 1), Orientation(0)), m, env)


def test_effect_moves_and_keeps_features_when_cell_empty(situation_mid, toy_spec):
    # LEFT from (2,1) facing north lands on (1,2), which holds no feature,
    # so the present set is unchanged.
    out = effect(situation_mid, Movement.LEFT, toy_spec.env)
    assert out.pos == HumanPosition(Location(1, 2), Orientation(3))
    assert out.present == situation_mid.present


def test_effect_removes_feature_at_post_location(situation_mid, toy_spec, toy_features):
    out = effect(situation_mid, Movement.STRAIGHT, toy_spec.env)
    assert out.pos.loc == Location(2, 2)
    assert situation_mid.present - out.present == {toy_features[2]}


def test_effect_rejects_invalid_movement():
    env = env_of(3, 3)
    s = Situation(HumanPosition(Location(0, 0), Orientation(4)), frozenset())
    with pytest.raises(InvalidMovementError):
        effect(s, Movement.STRAIGHT, env)


def test_effect_enumeration_matches_manual_diff():
    # Independent oracle: hand-enumerate all three movements on a 3x3 world
    # with one feature per landing cell and diff the feature sets directly.
    env = env_of(2, 2, [feat(0, 2, fid=0), feat(1, 2, fid=1), feat(2, 2, fid=2)])
    start = HumanPosition(Location(1, 1), Orientation(2))
    s = Situation(start, frozenset(env.features))
    for m in Movement:
        post = post_position(start, m)
        expected = frozenset(f for f in env.features if f.loc != post.loc)
        out = effect(s, m, env)
        assert out.present == expected
        assert len(s.present - out.present) <= 1


def test_distance_worked_examples(toy_features):
    h = HumanPosition(Location(2, 1), Orientation(2))
    assert distance(h, toy_features[9]) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert distance(h, toy_features[5]) == pytest.approx(math.sqrt(5), abs=1e-12)
    assert distance(h, feat(2, 1)) == 0.0


def test_distance_symmetric_and_zero_iff_equal():
    a = HumanPosition(Location(1, 4), Orientation(0))
    b = HumanPosition(Location(5, 1), Orientation(3))
    assert distance(a, feat(5, 1)) == distance(b, feat(1, 4))
    assert squared_distance(a.loc, b.loc) == 25


def test_signed_angle_worked_examples(toy_features):
    h = HumanPosition(Location(2, 1), Orientation(2))
    assert signed_angle(h, toy_features[9]) == pytest.approx(-math.pi / 4, abs=1e-12)
    # f5 sits to the human's right: magnitude about 26.6 degrees, negative.
    assert math.degrees(signed_angle(h, toy_features[5])) == pytest.approx(-26.565, abs=1e-3)
    assert math.degrees(signed_angle(h, toy_features[6])) == pytest.approx(63.435, abs=1e-3)


def test_signed_angle_dead_ahead_is_zero():
    h = HumanPosition(Location(2, 1), Orientation(2))
    assert signed_angle(h, feat(2, 4)) == 0.0


def test_signed_angle_rejects_zero_distance():
    h = HumanPosition(Location(2, 1), Orientation(2))
    with pytest.raises(ValueError):
        signed_angle(h, feat(2, 1))


@given(
    st.integers(min_value=-6, max_value=6),
    st.integers(min_value=-6, max_value=6),
    st.integers(min_value=0, max_value=7),
)
def test_signed_angle_negates_under_mirror(dx, dy, orient):
    # Mirroring the scene across the heading axis negates the bearing.
    if (dx, dy) == (0, 0):
        return
    h = HumanPosition(Location(10, 10), Orientation(orient))
    angle = signed_angle(h, feat(10 + dx, 10 + dy))
    hx, hy = direction_vector(h.orient)
    # Reflect (dx, dy) across the heading vector.
    dot = dx * hx + dy * hy
    norm = hx * hx + hy * hy
    rx = 2 * dot * hx - dx * norm
    ry = 2 * dot * hy - dy * norm
    mirrored = signed_angle(h, feat(10 + rx, 10 + ry))
    if abs(abs(angle) - math.pi) < 1e-12:
        assert abs(mirrored) == pytest.approx(math.pi, abs=1e-9)
    else:
        # The mirror has integer coordinates scaled by |h|^2; scaling does
        # not change the bearing.
        assert mirrored == pytest.approx(-angle, abs=1e-9)
