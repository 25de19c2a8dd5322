"""Grid kinematics of the human agent.

Coordinates are integer grid cells, (0, 0) bottom-left. Orientations are the
eight compass directions indexed 0..7, where index i means heading i * pi/4
counterclockwise from the positive x axis. A movement first turns the agent
by -45/0/+45 degrees and then advances one cell along the new heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple

if TYPE_CHECKING:
    from .scenario import Environment, Feature

ORIENTATION_COUNT = 8

# Direction vector per orientation index (counterclockwise from east).
DIRECTION_VECTORS = (
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
)


class Location(NamedTuple):
    """A grid cell."""

    x: int
    y: int


class Movement(Enum):
    """The three human movements; the value is the turn in 45-degree steps.

    Turning left is the counterclockwise (positive) turn.
    """

    LEFT = 1
    STRAIGHT = 0
    RIGHT = -1


# Canonical movement order used by all movement-value vectors.
MOVEMENTS = (Movement.LEFT, Movement.STRAIGHT, Movement.RIGHT)


@dataclass(frozen=True)
class Orientation:
    """One of the eight headings, stored as an index normalised modulo 8."""

    index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "index", self.index % ORIENTATION_COUNT)

    @property
    def radians(self) -> float:
        return self.index * math.pi / 4.0

    def turned(self, steps: int) -> "Orientation":
        return Orientation(self.index + steps)


@dataclass(frozen=True)
class HumanPosition:
    """Location plus heading."""

    loc: Location
    orient: Orientation


@dataclass(frozen=True)
class Situation:
    """Human position together with the still-present features."""

    pos: HumanPosition
    present: frozenset["Feature"]


class InvalidMovementError(ValueError):
    """Raised when a movement's post-position leaves the grid."""


def direction_vector(orient: Orientation) -> tuple[int, int]:
    """Unit-cell step vector for a heading; never (0, 0)."""
    return DIRECTION_VECTORS[orient.index]


def post_position(pos: HumanPosition, movement: Movement) -> HumanPosition:
    """Position after turning by the movement and stepping along the new heading.

    The result may lie off the grid; use is_valid to test that.
    """
    orient = pos.orient.turned(movement.value)
    dx, dy = DIRECTION_VECTORS[orient.index]
    return HumanPosition(Location(pos.loc.x + dx, pos.loc.y + dy), orient)


def is_valid(pos: HumanPosition, movement: Movement, env: "Environment") -> bool:
    """True iff the movement's post-position stays on env's grid."""
    return env.on_grid(post_position(pos, movement).loc)


def effect(situation: Situation, movement: Movement, env: "Environment") -> Situation:
    """Apply a valid movement: step, and mark features at the new cell disappeared."""
    new_pos = post_position(situation.pos, movement)
    if not env.on_grid(new_pos.loc):
        raise InvalidMovementError(
            f"movement {movement.name} leaves the grid from {situation.pos}"
        )
    present = frozenset(f for f in situation.present if f.loc != new_pos.loc)
    return Situation(new_pos, present)


def squared_distance(a: Location, b: Location) -> int:
    """Exact integer squared Euclidean distance; the tie-detection currency."""
    return (a.x - b.x) ** 2 + (a.y - b.y) ** 2


def distance(pos: HumanPosition, feature: "Feature") -> float:
    """Euclidean distance from the human to a feature."""
    return math.sqrt(squared_distance(pos.loc, feature.loc))


def signed_angle(pos: HumanPosition, feature: "Feature") -> float:
    """Bearing from the human's heading to the feature, in (-pi, pi].

    Positive angles mean the feature lies to the human's left
    (counterclockwise). Undefined for a feature on the human's own cell.
    """
    dx = feature.loc.x - pos.loc.x
    dy = feature.loc.y - pos.loc.y
    if dx == 0 and dy == 0:
        raise ValueError("signed angle undefined for a feature at zero distance")
    angle = math.atan2(dy, dx) - pos.orient.radians
    angle %= 2.0 * math.pi
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return angle
