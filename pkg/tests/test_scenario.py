"""Scenario and Q-table file parsing, validation and round-trips."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogverify import (
    FeatureType,
    Location,
    Movement,
    Objective,
    ScenarioParseError,
    ScenarioValidationError,
    parse_qtables,
    parse_scenario,
    serialize_qtables,
    serialize_scenario,
    validate_environment,
)
from cogverify.scenario import Environment, Feature, GoalRegion, ObjectiveWeights


def test_parse_toy_scenario(toy_spec):
    env = toy_spec.env
    assert (env.grid_x, env.grid_y) == (4, 4)
    assert len(env.features) == 9
    assert toy_spec.init_h.loc == Location(2, 0)
    assert toy_spec.init_h.orient.index == 2
    assert toy_spec.temperature == 0.5
    assert len(env.goal.cells) == 5
    assert Location(3, 4) in env.goal
    assert len(env.features_of_type(FeatureType.WAYPOINT)) == 4
    assert len(env.features_of_type(FeatureType.OBSTACLE)) == 3
    assert len(env.features_of_type(FeatureType.LITTER)) == 2


def test_parse_minimal_degenerate_scenario():
    spec = parse_scenario(
        "grid 1 1\ntemperature 1\nweights 0.5 0.25 0.25\nhuman 0 0 0\n"
    )
    assert spec.env.features == ()
    assert spec.env.goal.cells == frozenset()
    assert spec.robot is None


def test_parse_scenario_with_robot():
    spec = parse_scenario(
        "grid 4 4\ntemperature 1\nweights 1 0 0\nhuman 0 0 2\n"
        "goal rect 0 3 3 3\nfeature obstacle 2 2\n"
        "robot 3 0 4 obstacle\nrobot_goal cells 0,0 1,0\n"
        "robot_turn_order robot_first\n"
    )
    assert spec.robot is not None
    assert spec.robot.start.loc == Location(3, 0)
    assert spec.robot.mode.value == "obstacle"
    assert spec.robot.goal.cells == frozenset({Location(0, 0), Location(1, 0)})


def test_feature_off_grid_is_semantic_error():
    with pytest.raises(ScenarioValidationError, match="feature off-grid"):
        parse_scenario(
            "grid 4 4\ntemperature 1\nweights 1 0 0\nhuman 0 0 0\n"
            "feature litter 9 9\n"
        )


def test_duplicate_feature_rejected():
    with pytest.raises(ScenarioValidationError, match="duplicate feature"):
        parse_scenario(
            "grid 4 4\ntemperature 1\nweights 1 0 0\nhuman 0 0 0\n"
            "feature obstacle 1 1\nfeature obstacle 1 1\n"
        )


def test_weight_sum_checked():
    with pytest.raises(ScenarioValidationError, match="weight sum"):
        parse_scenario("grid 4 4\ntemperature 1\nweights 0.5 0.4 0.2\nhuman 0 0 0\n")


def test_syntax_error_carries_line_number():
    with pytest.raises(ScenarioParseError, match="line 2"):
        parse_scenario("grid 4 4\nhuman 0 zero 0\n")


def test_unknown_keyword_rejected():
    with pytest.raises(ScenarioParseError, match="unknown keyword"):
        parse_scenario("gird 4 4\n")


def test_missing_sections_reported():
    with pytest.raises(ScenarioParseError, match="missing required section"):
        parse_scenario("grid 4 4\nhuman 0 0 0\nweights 1 0 0\n")


def test_scenario_round_trip(toy_spec):
    again = parse_scenario(serialize_scenario(toy_spec))
    assert again == toy_spec


def test_robot_round_trip():
    text = (
        "grid 4 4\ntemperature 0.25\nweights 0.3 0.3 0.4\nhuman 1 1 3\n"
        "goal cells 3,3\nfeature litter 2 1\nrobot 0 0 2 ignored\n"
    )
    spec = parse_scenario(text)
    assert parse_scenario(serialize_scenario(spec)) == spec


def test_validate_environment_lists_all_violations():
    env = Environment(
        3, 3,
        (
            Feature(FeatureType.OBSTACLE, Location(1, 1), 0),
            Feature(FeatureType.OBSTACLE, Location(1, 1), 1),
            Feature(FeatureType.LITTER, Location(7, 0), 2),
        ),
        GoalRegion(frozenset({Location(9, 9)})),
    )
    with pytest.raises(ScenarioValidationError) as err:
        validate_environment(env)
    text = str(err.value)
    assert "duplicate feature" in text
    assert "feature off-grid" in text
    assert "goal cell off-grid" in text


def test_validate_environment_accepts_toy(toy_spec):
    validate_environment(toy_spec.env)


def test_weights_indexable():
    w = ObjectiveWeights(0.2, 0.3, 0.5)
    assert w[Objective.AVOID] == 0.2
    assert w[Objective.COLLECT] == 0.3
    assert w[Objective.FOLLOW] == 0.5
    w.validate()
    with pytest.raises(ScenarioValidationError):
        ObjectiveWeights(-0.1, 0.6, 0.5).validate()


# ---------------------------------------------------------------------------
# Q-tables


def test_parse_toy_qtables(toy_q):
    assert len(toy_q.angle_bins) == 5
    assert len(toy_q.distance_bins) == 3
    assert len(toy_q.tables) == 9
    got = toy_q.lookup(Objective.AVOID, Movement.LEFT, math.radians(-60), 2.5)
    assert got.value == -0.01
    assert got.confident


def test_lookup_examples_from_published_fragment(toy_q):
    d = math.sqrt(5)
    assert toy_q.lookup(Objective.AVOID, Movement.LEFT, math.radians(-60), d).value == -0.01
    assert toy_q.lookup(Objective.AVOID, Movement.STRAIGHT, math.radians(26), d).value == -0.67
    assert toy_q.lookup(Objective.AVOID, Movement.RIGHT, math.radians(26), d).value == -0.32


def test_constant_zero_tables():
    rows = "\n".join(["0 0" for _ in range(2)])
    blocks = "\n".join(
        f"table {o} {m}\n{rows}"
        for o in ("avoid", "collect", "follow")
        for m in ("left", "straight", "right")
    )
    q = parse_qtables("angle_bins [-90,0) [0,90]\ndistance_bins [0,2] (2,4]\n" + blocks)
    for o in Objective:
        for m in Movement:
            assert q.lookup(o, m, 0.3, 1.0).value == 0.0


def test_missing_table_reported():
    text = "angle_bins [-90,90]\ndistance_bins [0,3]\n" + "\n".join(
        f"table {o} {m}\n0"
        for o in ("avoid", "collect", "follow")
        for m in ("left", "straight", "right")
        if not (o == "collect" and m == "right")
    )
    with pytest.raises(ScenarioValidationError, match="missing table: collect right"):
        parse_qtables(text)


def test_non_contiguous_bins_rejected():
    with pytest.raises(ScenarioParseError, match="contiguous"):
        parse_qtables("angle_bins [-90,-45) [-30,0]\ndistance_bins [0,1]\n")


def test_overlapping_bin_closures_rejected():
    with pytest.raises(ScenarioParseError, match="overlap"):
        parse_qtables("angle_bins [-90,0] [0,90]\ndistance_bins [0,1]\n")
    with pytest.raises(ScenarioParseError, match="gap"):
        parse_qtables("angle_bins [-90,0) (0,90]\ndistance_bins [0,1]\n")


def test_malformed_numeric_rejected():
    text = "angle_bins [-90,90]\ndistance_bins [0,3]\ntable avoid left\n0.x\n"
    with pytest.raises(ScenarioParseError, match="malformed numeric"):
        parse_qtables(text)


def test_wrong_row_width_rejected():
    text = "angle_bins [-90,90]\ndistance_bins [0,1] (1,3]\ntable avoid left\n0\n"
    with pytest.raises(ScenarioParseError, match="entries, expected 2"):
        parse_qtables(text)


def test_confidence_blocks_round_trip(toy_qtables_text):
    text = toy_qtables_text + "\nconfidence avoid left\n" + "\n".join(
        ["1 1 0"] * 5
    ) + "\n"
    q = parse_qtables(text)
    assert q.has_confidence
    assert not q.lookup(Objective.AVOID, Movement.LEFT, math.radians(-60), 2.5).confident
    assert q.lookup(Objective.AVOID, Movement.LEFT, math.radians(-60), 1.5).confident
    again = parse_qtables(serialize_qtables(q))
    assert again == q


def test_qtables_round_trip(toy_q):
    assert parse_qtables(serialize_qtables(toy_q)) == toy_q


@given(
    st.floats(min_value=-180.0, max_value=180.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=50.0, allow_nan=False),
)
def test_lookup_total_over_angle_distance(angle_deg, dist):
    # Any angle in [-180, 180] and distance >= 0 resolves to exactly one cell
    # after clamping.
    q = parse_qtables(TOTAL_TABLES)
    a, d = q.cell(angle_deg, dist)
    assert 0 <= a < len(q.angle_bins)
    assert 0 <= d < len(q.distance_bins)


TOTAL_TABLES = "angle_bins [-90,-45) [-45,15] (15,90]\ndistance_bins [0,1] (1,2]\n" + "\n".join(
    f"table {o} {m}\n" + "\n".join(["1 2"] * 3)
    for o in ("avoid", "collect", "follow")
    for m in ("left", "straight", "right")
)
