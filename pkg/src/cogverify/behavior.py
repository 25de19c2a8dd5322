"""From a situation to movement valuations and probability distributions.

The pipeline per objective: take the present features of the matching type,
keep only the closest ones (exact integer squared distances), look each up in
the Q-tables, then weight and sum over every cross-objective combination.
A softmax with temperature turns each resulting movement vector into a
distribution over LEFT/STRAIGHT/RIGHT.

Sign conventions: geometry.signed_angle is counterclockwise-positive (left of
the human is positive), while the Q-table angle axis is the opposite,
clockwise-positive bearing; table_angle converts. This is the only reading
consistent with both worked examples the tables come with.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .geometry import (
    DIRECTION_VECTORS,
    MOVEMENTS,
    HumanPosition,
    Movement,
    Situation,
    distance,
    is_valid,
    signed_angle,
    squared_distance,
)
from .scenario import (
    OBJECTIVES,
    Environment,
    Feature,
    LookupResult,
    Objective,
    ObjectiveWeights,
    QTableSet,
)

#: Movement-value vectors are (LEFT, STRAIGHT, RIGHT); -inf marks an invalid movement.
MovementVector = tuple[float, float, float]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ValuationEntry:
    """One weighted movement vector with the features that produced it.

    ``triple`` is ordered (obstacle, litter, waypoint); a None slot means the
    objective had no present features and contributed a zero vector.
    """

    triple: tuple[Feature | None, Feature | None, Feature | None]
    values: MovementVector
    confident: bool

    @property
    def features(self) -> frozenset[Feature]:
        return frozenset(f for f in self.triple if f is not None)


Valuation = tuple[ValuationEntry, ...]


def relevant_features(situation: Situation, objective: Objective) -> frozenset[Feature]:
    """Present features whose type corresponds to the objective."""
    ftype = objective.feature_type
    return frozenset(f for f in situation.present if f.ftype == ftype)


def closest_relevant(situation: Situation, objective: Objective) -> frozenset[Feature]:
    """All relevant features at exactly the minimal squared distance."""
    relevant = relevant_features(situation, objective)
    if not relevant:
        return frozenset()
    loc = situation.pos.loc
    best = min(squared_distance(loc, f.loc) for f in relevant)
    return frozenset(f for f in relevant if squared_distance(loc, f.loc) == best)


def _angle_rank(pos: HumanPosition, feature: Feature) -> tuple[int, int]:
    """Exact tie-break key among equidistant features: maximise it.

    For equal distances, a larger heading-dot-offset means a smaller absolute
    bearing; on a dot tie the positive cross product (feature on the left)
    wins. Both are integers, so ties are decided exactly.
    """
    hx, hy = DIRECTION_VECTORS[pos.orient.index]
    vx = feature.loc.x - pos.loc.x
    vy = feature.loc.y - pos.loc.y
    return (hx * vx + hy * vy, hx * vy - hy * vx)


def pick_unique(pos: HumanPosition, candidates: Sequence[Feature]) -> Feature:
    """Tie-break equidistant candidates: smallest absolute bearing, then the
    feature on the human's left; any residual tie goes to the lowest id."""
    return max(candidates, key=lambda f: (*_angle_rank(pos, f), -f.fid))


def unique_closest(situation: Situation, objective: Objective) -> Feature | None:
    """The closest relevant feature after tie-breaking; None if there is none."""
    candidates = closest_relevant(situation, objective)
    if not candidates:
        return None
    return pick_unique(situation.pos, tuple(candidates))


def lookup(qtables: QTableSet, objective: Objective, movement: Movement,
           angle: float, dist: float) -> LookupResult:
    """Q-table cell for a table-axis angle (radians) and distance (tiles)."""
    return qtables.lookup(objective, movement, angle, dist)


def table_angle(pos: HumanPosition, feature: Feature) -> float:
    """Bearing to the feature on the Q-table's clockwise-positive axis.

    A feature on the human's own cell (possible only before it disappears,
    i.e. at the start) is treated as dead ahead.
    """
    if feature.loc == pos.loc:
        return 0.0
    return -signed_angle(pos, feature)


def objective_movement_values(
    situation: Situation, objective: Objective, qtables: QTableSet
) -> tuple[tuple[Feature, MovementVector, bool], ...]:
    """One (feature, movement vector, confident) per closest relevant feature."""
    ordered = sorted(closest_relevant(situation, objective), key=lambda f: f.fid)
    return _movement_values(situation.pos, ordered, objective, qtables)


def _movement_values(
    pos: HumanPosition, features: Sequence[Feature],
    objective: Objective, qtables: QTableSet,
) -> tuple[tuple[Feature, MovementVector, bool], ...]:
    out = []
    for f in features:
        angle = table_angle(pos, f)
        dist = distance(pos, f)
        cells = [qtables.lookup(objective, m, angle, dist) for m in MOVEMENTS]
        vector = tuple(c.value for c in cells)
        confident = all(c.confident for c in cells)
        out.append((f, vector, confident))
    return tuple(out)


def combine(situation: Situation, qtables: QTableSet,
            weights: ObjectiveWeights, env: Environment) -> Valuation:
    """Weighted movement vectors for every combination of closest features.

    Movements that would leave the grid are reset to -inf; entries whose
    vector is all -inf are dropped. An objective with no present features
    contributes a zero vector and no feature to every combination.
    """
    closest = {
        o: sorted(closest_relevant(situation, o), key=lambda f: f.fid)
        for o in OBJECTIVES
    }
    return combine_closest(situation.pos, closest, qtables, weights, env)


def combine_closest(
    pos: HumanPosition,
    closest: Mapping[Objective, Sequence[Feature]],
    qtables: QTableSet,
    weights: ObjectiveWeights,
    env: Environment,
) -> Valuation:
    """combine() on precomputed per-objective closest-feature sets."""
    factors: list[tuple[tuple[Feature | None, MovementVector, bool], ...]] = []
    for o in OBJECTIVES:
        features = closest.get(o, ())
        if features:
            factors.append(_movement_values(pos, features, o, qtables))
        else:
            factors.append(((None, (0.0, 0.0, 0.0), True),))

    validity = [is_valid(pos, m, env) for m in MOVEMENTS]
    entries = []
    for combo in itertools.product(*factors):
        summed = [0.0, 0.0, 0.0]
        confident = True
        for (f, vector, conf), o in zip(combo, OBJECTIVES):
            w = weights[o]
            for i in range(3):
                summed[i] += w * vector[i]
            confident = confident and conf
        values = tuple(
            summed[i] if validity[i] else NEG_INF for i in range(3)
        )
        if all(v == NEG_INF for v in values):
            continue
        entries.append(
            ValuationEntry(tuple(c[0] for c in combo), values, confident)
        )
    return tuple(entries)


def softmax(values: Iterable[float], temperature: float) -> tuple[float, ...]:
    """Softmax with temperature; e**-inf is exactly 0.

    Computed with max-subtraction, which is legitimate by shift invariance.
    Raises if no entry is finite or the temperature is not positive.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    values = tuple(values)
    if any(math.isnan(v) for v in values):
        raise ValueError("movement values must not be NaN")
    finite = [v for v in values if v != NEG_INF]
    if not finite:
        raise ValueError("softmax undefined: all movement values are -inf")
    top = max(finite)
    exps = [0.0 if v == NEG_INF else math.exp((v - top) / temperature) for v in values]
    total = sum(exps)
    return tuple(e / total for e in exps)
