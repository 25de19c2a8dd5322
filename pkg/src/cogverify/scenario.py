"""Static world description and input-file parsing.

Two text formats are handled here:

* scenario files: grid size, typed features, goal region, human start,
  objective weights, softmax temperature and an optional robot block;
* Q-table files: shared angle/distance bins plus one value table per
  (objective, movement) pair, with optional per-cell confidence flags.

Both formats are line oriented; ``#`` starts a comment. See the README for
the full grammar. Parsed values are immutable and safe to share.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .geometry import (
    MOVEMENTS,
    ORIENTATION_COUNT,
    HumanPosition,
    Location,
    Movement,
    Orientation,
)

WEIGHT_SUM_TOLERANCE = 1e-9


class ScenarioError(ValueError):
    """Base class for scenario/Q-table input errors."""


class ScenarioParseError(ScenarioError):
    """Syntax error, carrying 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    """Semantic error; carries every violated invariant."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = tuple(violations)


class FeatureType(Enum):
    OBSTACLE = "obstacle"
    LITTER = "litter"
    WAYPOINT = "waypoint"


class Objective(Enum):
    """The three behavioural objectives, each tied to one feature type."""

    AVOID = "avoid"
    COLLECT = "collect"
    FOLLOW = "follow"

    @property
    def feature_type(self) -> FeatureType:
        return _OBJECTIVE_TO_TYPE[self]


_OBJECTIVE_TO_TYPE = {
    Objective.AVOID: FeatureType.OBSTACLE,
    Objective.COLLECT: FeatureType.LITTER,
    Objective.FOLLOW: FeatureType.WAYPOINT,
}

# Canonical objective order; matches the (obstacle, litter, waypoint) slot
# order of action labels and the weight-vector order.
OBJECTIVES = (Objective.AVOID, Objective.COLLECT, Objective.FOLLOW)


@dataclass(frozen=True)
class Feature:
    """A typed grid object that disappears when the human steps onto it."""

    ftype: FeatureType
    loc: Location
    fid: int


@dataclass(frozen=True)
class GoalRegion:
    cells: frozenset[Location] = field(default_factory=frozenset)

    @classmethod
    def from_rect(cls, x0: int, y0: int, x1: int, y1: int) -> "GoalRegion":
        xs = range(min(x0, x1), max(x0, x1) + 1)
        ys = range(min(y0, y1), max(y0, y1) + 1)
        return cls(frozenset(Location(x, y) for x in xs for y in ys))

    def __contains__(self, loc: Location) -> bool:
        return loc in self.cells


@dataclass(frozen=True)
class Environment:
    """Grid bounds (inclusive maxima), features and the goal region."""

    grid_x: int
    grid_y: int
    features: tuple[Feature, ...]
    goal: GoalRegion = GoalRegion()

    def on_grid(self, loc: Location) -> bool:
        return 0 <= loc.x <= self.grid_x and 0 <= loc.y <= self.grid_y

    def features_of_type(self, ftype: FeatureType) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.ftype == ftype)

    def features_at(self, loc: Location) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.loc == loc)


def validate_environment(env: Environment) -> None:
    """Raise ScenarioValidationError listing every violated invariant."""
    violations = []
    seen_ids: set[int] = set()
    seen_type_loc: set[tuple[FeatureType, Location]] = set()
    for f in env.features:
        if not env.on_grid(f.loc):
            violations.append(f"feature off-grid: {f.ftype.value} at {tuple(f.loc)}")
        if f.fid in seen_ids:
            violations.append(f"duplicate feature id {f.fid}")
        seen_ids.add(f.fid)
        key = (f.ftype, f.loc)
        if key in seen_type_loc:
            violations.append(
                f"duplicate feature: {f.ftype.value} at {tuple(f.loc)}"
            )
        seen_type_loc.add(key)
    for cell in sorted(env.goal.cells):
        if not env.on_grid(cell):
            violations.append(f"goal cell off-grid: {tuple(cell)}")
    if violations:
        raise ScenarioValidationError(violations)


@dataclass(frozen=True)
class ObjectiveWeights:
    """Preference weights over the objectives, ordered (avoid, collect, follow)."""

    avoid: float
    collect: float
    follow: float

    def __getitem__(self, objective: Objective) -> float:
        return getattr(self, objective.value)

    def validate(self) -> None:
        values = (self.avoid, self.collect, self.follow)
        if any(w < 0 for w in values):
            raise ScenarioValidationError(["negative objective weight"])
        if abs(sum(values) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ScenarioValidationError(
                [f"weight sum {sum(values)!r} differs from 1"]
            )


class RobotMode(Enum):
    IGNORED = "ignored"
    OBSTACLE = "obstacle"


class TurnOrder(Enum):
    HUMAN_FIRST = "human_first"
    ROBOT_FIRST = "robot_first"


# Orientation indices the robot may take: the four cardinal headings.
CARDINAL_INDICES = (0, 2, 4, 6)


@dataclass(frozen=True)
class RobotSpec:
    """Robot start, goal and interaction mode for the two-player game."""

    start: HumanPosition
    goal: GoalRegion = GoalRegion()
    mode: RobotMode = RobotMode.IGNORED
    turn_order: TurnOrder = TurnOrder.HUMAN_FIRST


@dataclass(frozen=True)
class ScenarioSpec:
    env: Environment
    init_h: HumanPosition
    temperature: float
    weights: ObjectiveWeights
    robot: RobotSpec | None = None

    def with_temperature(self, temperature: float) -> "ScenarioSpec":
        return ScenarioSpec(self.env, self.init_h, temperature, self.weights, self.robot)


def validate_scenario(spec: ScenarioSpec) -> None:
    """Full semantic validation of a scenario (environment plus dynamics)."""
    violations: list[str] = []
    try:
        validate_environment(spec.env)
    except ScenarioValidationError as exc:
        violations.extend(exc.violations)
    if spec.temperature <= 0:
        violations.append(f"temperature must be positive, got {spec.temperature!r}")
    if not spec.env.on_grid(spec.init_h.loc):
        violations.append(f"human start off-grid: {tuple(spec.init_h.loc)}")
    try:
        spec.weights.validate()
    except ScenarioValidationError as exc:
        violations.extend(exc.violations)
    if spec.robot is not None:
        if not spec.env.on_grid(spec.robot.start.loc):
            violations.append(f"robot start off-grid: {tuple(spec.robot.start.loc)}")
        if spec.robot.start.orient.index not in CARDINAL_INDICES:
            violations.append("robot orientation must be cardinal (index 0, 2, 4 or 6)")
        for cell in sorted(spec.robot.goal.cells):
            if not spec.env.on_grid(cell):
                violations.append(f"robot goal cell off-grid: {tuple(cell)}")
    if violations:
        raise ScenarioValidationError(violations)


# ---------------------------------------------------------------------------
# Scenario files


def _logical_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if line.strip():
            yield lineno, line


def _int_token(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ScenarioParseError(f"expected integer {what}, got {token!r}", lineno) from None


def _float_token(token: str, lineno: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ScenarioParseError(f"malformed numeric {what}: {token!r}", lineno) from None


def _parse_goal_tail(tokens: list[str], lineno: int) -> frozenset[Location]:
    if not tokens:
        raise ScenarioParseError("goal needs 'rect x0 y0 x1 y1' or 'cells x,y ...'", lineno)
    kind, rest = tokens[0], tokens[1:]
    if kind == "rect":
        if len(rest) != 4:
            raise ScenarioParseError("goal rect needs exactly 4 integers", lineno)
        x0, y0, x1, y1 = (_int_token(t, lineno, "goal coordinate") for t in rest)
        return GoalRegion.from_rect(x0, y0, x1, y1).cells
    if kind == "cells":
        cells = set()
        for tok in rest:
            parts = tok.split(",")
            if len(parts) != 2:
                raise ScenarioParseError(f"goal cell must be x,y: {tok!r}", lineno)
            cells.add(Location(_int_token(parts[0], lineno, "goal x"),
                               _int_token(parts[1], lineno, "goal y")))
        return frozenset(cells)
    raise ScenarioParseError(f"unknown goal kind {kind!r}", lineno)


def parse_scenario(text: str) -> ScenarioSpec:
    """Parse and validate a scenario file into a ScenarioSpec."""
    grid: tuple[int, int] | None = None
    features: list[Feature] = []
    goal_cells: set[Location] = set()
    human: HumanPosition | None = None
    weights: ObjectiveWeights | None = None
    temperature: float | None = None
    robot_pos: HumanPosition | None = None
    robot_mode = RobotMode.IGNORED
    robot_goal_cells: set[Location] = set()
    turn_order = TurnOrder.HUMAN_FIRST
    has_robot = False

    for lineno, line in _logical_lines(text):
        tokens = line.split()
        keyword, rest = tokens[0], tokens[1:]
        if keyword == "grid":
            if len(rest) != 2:
                raise ScenarioParseError("grid needs width and height", lineno)
            w = _int_token(rest[0], lineno, "grid width")
            h = _int_token(rest[1], lineno, "grid height")
            if w < 1 or h < 1:
                raise ScenarioParseError("grid must be at least 1x1", lineno)
            grid = (w, h)
        elif keyword == "temperature":
            if len(rest) != 1:
                raise ScenarioParseError("temperature needs one value", lineno)
            temperature = _float_token(rest[0], lineno, "temperature")
        elif keyword == "weights":
            if len(rest) != 3:
                raise ScenarioParseError(
                    "weights needs three values: avoid collect follow", lineno
                )
            wa, wc, wf = (_float_token(t, lineno, "weight") for t in rest)
            weights = ObjectiveWeights(wa, wc, wf)
        elif keyword == "human":
            if len(rest) != 3:
                raise ScenarioParseError("human needs x y orientation", lineno)
            x, y, o = (_int_token(t, lineno, "human field") for t in rest)
            if not 0 <= o < ORIENTATION_COUNT:
                raise ScenarioParseError("human orientation index must be 0..7", lineno)
            human = HumanPosition(Location(x, y), Orientation(o))
        elif keyword == "goal":
            goal_cells |= _parse_goal_tail(rest, lineno)
        elif keyword == "feature":
            if len(rest) != 3:
                raise ScenarioParseError("feature needs type x y", lineno)
            try:
                ftype = FeatureType(rest[0])
            except ValueError:
                raise ScenarioParseError(f"unknown feature type {rest[0]!r}", lineno) from None
            x = _int_token(rest[1], lineno, "feature x")
            y = _int_token(rest[2], lineno, "feature y")
            features.append(Feature(ftype, Location(x, y), len(features)))
        elif keyword == "robot":
            if len(rest) not in (3, 4):
                raise ScenarioParseError("robot needs x y orientation [mode]", lineno)
            x, y, o = (_int_token(t, lineno, "robot field") for t in rest[:3])
            if len(rest) == 4:
                try:
                    robot_mode = RobotMode(rest[3])
                except ValueError:
                    raise ScenarioParseError(
                        f"robot mode must be ignored or obstacle, got {rest[3]!r}", lineno
                    ) from None
            robot_pos = HumanPosition(Location(x, y), Orientation(o))
            has_robot = True
        elif keyword == "robot_goal":
            robot_goal_cells |= _parse_goal_tail(rest, lineno)
        elif keyword == "robot_turn_order":
            if len(rest) != 1:
                raise ScenarioParseError("robot_turn_order needs one value", lineno)
            try:
                turn_order = TurnOrder(rest[0])
            except ValueError:
                raise ScenarioParseError(
                    f"turn order must be human_first or robot_first, got {rest[0]!r}",
                    lineno,
                ) from None
        else:
            raise ScenarioParseError(f"unknown keyword {keyword!r}", lineno)

    for name, value in (("grid", grid), ("human", human),
                        ("weights", weights), ("temperature", temperature)):
        if value is None:
            raise ScenarioParseError(f"missing required section {name!r}", 1)

    env = Environment(grid[0] - 1, grid[1] - 1, tuple(features),
                      GoalRegion(frozenset(goal_cells)))
    robot = None
    if has_robot:
        robot = RobotSpec(robot_pos, GoalRegion(frozenset(robot_goal_cells)),
                          robot_mode, turn_order)
    spec = ScenarioSpec(env, human, temperature, weights, robot)
    validate_scenario(spec)
    return spec


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Render a ScenarioSpec back into the scenario-file format."""
    lines = [
        f"grid {spec.env.grid_x + 1} {spec.env.grid_y + 1}",
        f"temperature {spec.temperature!r}",
        f"weights {spec.weights.avoid!r} {spec.weights.collect!r} {spec.weights.follow!r}",
        f"human {spec.init_h.loc.x} {spec.init_h.loc.y} {spec.init_h.orient.index}",
    ]
    if spec.env.goal.cells:
        cells = " ".join(f"{c.x},{c.y}" for c in sorted(spec.env.goal.cells))
        lines.append(f"goal cells {cells}")
    for f in spec.env.features:
        lines.append(f"feature {f.ftype.value} {f.loc.x} {f.loc.y}")
    if spec.robot is not None:
        r = spec.robot
        lines.append(
            f"robot {r.start.loc.x} {r.start.loc.y} {r.start.orient.index} {r.mode.value}"
        )
        if r.goal.cells:
            cells = " ".join(f"{c.x},{c.y}" for c in sorted(r.goal.cells))
            lines.append(f"robot_goal cells {cells}")
        lines.append(f"robot_turn_order {r.turn_order.value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Q-table files


@dataclass(frozen=True)
class BinInterval:
    lo: float
    lo_closed: bool
    hi: float
    hi_closed: bool

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:g},{self.hi:g}{right}"


_BIN_RE = re.compile(r"^([\[(])\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*([\])])$")


@dataclass(frozen=True)
class Bins:
    """A contiguous, strictly increasing sequence of half-open/closed intervals.

    Values outside the covered range clamp to the first or last bin, so every
    real number resolves to exactly one bin.
    """

    intervals: tuple[BinInterval, ...]

    def find(self, value: float) -> int:
        if value <= self.intervals[0].lo:
            return 0
        if value >= self.intervals[-1].hi:
            return len(self.intervals) - 1
        for i, b in enumerate(self.intervals):
            above = value > b.lo or (b.lo_closed and value == b.lo)
            below = value < b.hi or (b.hi_closed and value == b.hi)
            if above and below:
                return i
        # Contiguity makes this unreachable for values inside the range.
        raise AssertionError(f"no bin for {value!r}")

    def __len__(self) -> int:
        return len(self.intervals)


def _parse_bins(tokens: list[str], lineno: int, what: str) -> Bins:
    if not tokens:
        raise ScenarioParseError(f"{what} needs at least one interval", lineno)
    intervals = []
    for tok in tokens:
        m = _BIN_RE.match(tok)
        if not m:
            raise ScenarioParseError(f"malformed {what} interval {tok!r}", lineno)
        lo, hi = float(m.group(2)), float(m.group(3))
        if not lo < hi:
            raise ScenarioParseError(
                f"{what} interval {tok!r} not strictly increasing", lineno
            )
        intervals.append(BinInterval(lo, m.group(1) == "[", hi, m.group(4) == "]"))
    for prev, cur in zip(intervals, intervals[1:]):
        if prev.hi != cur.lo:
            raise ScenarioParseError(
                f"{what} bins must be contiguous: {prev} then {cur}", lineno
            )
        if prev.hi_closed == cur.lo_closed:
            kind = "overlap" if prev.hi_closed else "gap"
            raise ScenarioParseError(
                f"{what} bins {kind} at {prev.hi:g}: {prev} then {cur}", lineno
            )
    return Bins(tuple(intervals))


class LookupResult(tuple):
    """A (value, confident) pair; confident defaults to True for flag-less tables."""

    __slots__ = ()

    def __new__(cls, value: float, confident: bool):
        return super().__new__(cls, (value, confident))

    @property
    def value(self) -> float:
        return self[0]

    @property
    def confident(self) -> bool:
        return self[1]


@dataclass(frozen=True)
class QTable:
    """Values (and optional confidence flags) per (angle bin, distance bin)."""

    values: tuple[tuple[float, ...], ...]
    confidence: tuple[tuple[bool, ...], ...] | None = None


@dataclass(frozen=True)
class QTableSet:
    """All nine (objective, movement) tables over shared angle/distance bins.

    Angle bins are in degrees, distance bins in tiles; rows of each table are
    angle bins, columns distance bins, exactly as the file lists them.
    """

    angle_bins: Bins
    distance_bins: Bins
    tables: dict[tuple[Objective, Movement], QTable]

    def cell(self, angle_deg: float, dist: float) -> tuple[int, int]:
        """Clamped (angle bin, distance bin) indices for a degree/tile pair."""
        return self.angle_bins.find(angle_deg), self.distance_bins.find(dist)

    def lookup(self, objective: Objective, movement: Movement,
               angle: float, dist: float) -> LookupResult:
        """Value of the bin containing (angle, dist); angle is in radians."""
        a, d = self.cell(math.degrees(angle), dist)
        table = self.tables[(objective, movement)]
        confident = table.confidence is None or table.confidence[a][d]
        return LookupResult(table.values[a][d], confident)

    @property
    def has_confidence(self) -> bool:
        return any(t.confidence is not None for t in self.tables.values())


def parse_qtables(text: str) -> QTableSet:
    """Parse a Q-table file; all nine (objective, movement) tables must be present."""
    angle_bins: Bins | None = None
    distance_bins: Bins | None = None
    values: dict[tuple[Objective, Movement], list[tuple[float, ...]]] = {}
    confidence: dict[tuple[Objective, Movement], list[tuple[bool, ...]]] = {}
    current: tuple[str, Objective, Movement] | None = None

    def parse_key(rest: list[str], lineno: int) -> tuple[Objective, Movement]:
        if len(rest) != 2:
            raise ScenarioParseError("expected '<objective> <movement>'", lineno)
        try:
            objective = Objective(rest[0].lower())
        except ValueError:
            raise ScenarioParseError(f"unknown objective {rest[0]!r}", lineno) from None
        try:
            movement = Movement[rest[1].upper()]
        except KeyError:
            raise ScenarioParseError(f"unknown movement {rest[1]!r}", lineno) from None
        return objective, movement

    for lineno, line in _logical_lines(text):
        tokens = line.split()
        keyword, rest = tokens[0], tokens[1:]
        if keyword == "angle_bins":
            angle_bins = _parse_bins(rest, lineno, "angle_bins")
            current = None
        elif keyword == "distance_bins":
            distance_bins = _parse_bins(rest, lineno, "distance_bins")
            current = None
        elif keyword in ("table", "confidence"):
            key = parse_key(rest, lineno)
            target = values if keyword == "table" else confidence
            if key in target:
                raise ScenarioParseError(
                    f"duplicate {keyword} block for {key[0].value} {key[1].name.lower()}",
                    lineno,
                )
            target[key] = []
            current = (keyword, *key)
        else:
            if current is None:
                raise ScenarioParseError(
                    f"value row outside any table block: {line.strip()!r}", lineno
                )
            if angle_bins is None or distance_bins is None:
                raise ScenarioParseError(
                    "angle_bins and distance_bins must precede tables", lineno
                )
            kind, objective, movement = current
            if kind == "table":
                row = tuple(_float_token(t, lineno, "table entry") for t in tokens)
                store = values[(objective, movement)]
            else:
                for t in tokens:
                    if t not in ("0", "1"):
                        raise ScenarioParseError(
                            f"confidence entries must be 0 or 1, got {t!r}", lineno
                        )
                row = tuple(t == "1" for t in tokens)
                store = confidence[(objective, movement)]
            if len(row) != len(distance_bins):
                raise ScenarioParseError(
                    f"row has {len(row)} entries, expected {len(distance_bins)}", lineno
                )
            if len(store) >= len(angle_bins):
                raise ScenarioParseError(
                    f"too many rows for {objective.value} {movement.name.lower()}", lineno
                )
            store.append(row)

    if angle_bins is None:
        raise ScenarioParseError("missing angle_bins", 1)
    if distance_bins is None:
        raise ScenarioParseError("missing distance_bins", 1)

    missing = [
        f"{o.value} {m.name.lower()}"
        for o in OBJECTIVES
        for m in MOVEMENTS
        if (o, m) not in values
    ]
    if missing:
        raise ScenarioValidationError([f"missing table: {name}" for name in missing])

    tables: dict[tuple[Objective, Movement], QTable] = {}
    problems: list[str] = []
    for o in OBJECTIVES:
        for m in MOVEMENTS:
            key = (o, m)
            rows = values[key]
            name = f"{o.value} {m.name.lower()}"
            if len(rows) != len(angle_bins):
                problems.append(
                    f"table {name} has {len(rows)} rows, expected {len(angle_bins)}"
                )
                continue
            conf = confidence.get(key)
            if conf is not None and len(conf) != len(angle_bins):
                problems.append(
                    f"confidence {name} has {len(conf)} rows, expected {len(angle_bins)}"
                )
                continue
            tables[key] = QTable(tuple(rows), tuple(conf) if conf is not None else None)
    stray = set(confidence) - set(values)
    for key in sorted(stray, key=lambda k: (k[0].value, k[1].name)):
        problems.append(
            f"confidence without table: {key[0].value} {key[1].name.lower()}"
        )
    if problems:
        raise ScenarioValidationError(problems)
    return QTableSet(angle_bins, distance_bins, tables)


def serialize_qtables(qtables: QTableSet) -> str:
    """Render a QTableSet back into the Q-table file format."""
    lines = [
        "angle_bins " + " ".join(str(b) for b in qtables.angle_bins.intervals),
        "distance_bins " + " ".join(str(b) for b in qtables.distance_bins.intervals),
    ]
    for o in OBJECTIVES:
        for m in MOVEMENTS:
            table = qtables.tables[(o, m)]
            lines.append(f"table {o.value} {m.name.lower()}")
            for row in table.values:
                lines.append(" ".join(repr(v) for v in row))
            if table.confidence is not None:
                lines.append(f"confidence {o.value} {m.name.lower()}")
                for row in table.confidence:
                    lines.append(" ".join("1" if c else "0" for c in row))
    return "\n".join(lines) + "\n"
