"""Shared fixtures: the 5x5 toy scenario and its Q-table fragment.

Feature ids follow file order, so fid 0..8 correspond to the toy world's
w1..w4 (waypoints on column 2), o5..o7 (obstacles) and l8..l9 (litter).
"""

import pytest

from cogverify import (
    HumanPosition,
    Location,
    Orientation,
    Situation,
    parse_qtables,
    parse_scenario,
)

TOY_SCENARIO = """\
# 5x5 toy world: waypoint column, three obstacles, two pieces of litter
grid 5 5
temperature 0.5
weights 0.4 0.2 0.4
human 2 0 2
goal rect 0 4 4 4
feature waypoint 2 1
feature waypoint 2 2
feature waypoint 2 3
feature waypoint 2 4
feature obstacle 3 3
feature obstacle 0 2
feature obstacle 0 4
feature litter 1 3
feature litter 4 3
"""

# Angle rows top-to-bottom, distance columns left-to-right. The avoid tables
# are the published fragment; collect and follow carry the worked-example
# vectors in the cells the toy situations actually hit.
TOY_QTABLES = """\
angle_bins [-90,-45) [-45,-15) [-15,15] (15,45] (45,90]
distance_bins [0,1] (1,2] (2,3]

table avoid left
-0.5  -0.495 -0.01
-1.21 -1.19  -0.59
-0.87 -1.12  -0.43
-0.75 -0.18   0
-0.75 -0.06   0

table avoid straight
 0     0     0
-0.02 -0.96 -0.28
-0.4  -1    -1.12
-0.27 -0.99 -0.67
 0     0     0

table avoid right
-0.96 -0     0
-0.88 -0.77  0
-0.88 -1.3  -0.04
-0.99 -0.99 -0.32
-0.5  -0.13 -0.34

table collect left
0 0 0
0 0 2.5
0 0 0
0 0 0
0 0 0

table collect straight
0 0 0
0 0 2.4
0 0 0
0 0 0
0 0 0

table collect right
0 0 0
0 0 2
0 0 0
0 0 0
0 0 0

table follow left
0 0 0
0 0 0
0 0 0
0 0 0
0 0 0

table follow straight
0 0 0
0 0 0
1.14 0.6 0.3
0 0 0
0 0 0

table follow right
0 0 0
0 0 0
0 0 0
0 0 0
0 0 0
"""


@pytest.fixture(scope="session")
def toy_scenario_text():
    return TOY_SCENARIO


@pytest.fixture(scope="session")
def toy_qtables_text():
    return TOY_QTABLES


@pytest.fixture(scope="session")
def toy_spec():
    return parse_scenario(TOY_SCENARIO)


@pytest.fixture(scope="session")
def toy_q():
    return parse_qtables(TOY_QTABLES)


@pytest.fixture(scope="session")
def toy_features(toy_spec):
    """Features keyed by the toy world's 1-based numbering."""
    return {f.fid + 1: f for f in toy_spec.env.features}


@pytest.fixture
def situation_mid(toy_spec, toy_features):
    """Human one step up the waypoint column: at (2,1) facing north, the
    waypoint there already consumed."""
    present = frozenset(f for f in toy_spec.env.features if f.fid != 0)
    return Situation(HumanPosition(Location(2, 1), Orientation(2)), present)


@pytest.fixture
def situation_initial(toy_spec):
    return Situation(toy_spec.init_h, frozenset(toy_spec.env.features))
