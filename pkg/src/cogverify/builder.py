"""Construct explicit models from a scenario and its Q-tables.

Built here: the human-behaviour MDP (underspecified, low-confidence and
tie-broken variants), the deterministic robot MDP, the turn-based
human-robot stochastic game, objective rewards in both encodings, and the
coalition reduction.

States are packed integers (position index, present-feature bitmask, plus
robot state and turn flag in games); all semantic computation goes through
behavior.combine_closest, memoised per (position, closest-feature sets), so
the fast path and the public pipeline cannot diverge. Exploration is a
breadth-first expansion over deterministic chunks: state numbering is
identical for every worker count.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

import numpy as np

from . import behavior
from ._util import parallel_map
from .geometry import (
    MOVEMENTS,
    ORIENTATION_COUNT,
    HumanPosition,
    Location,
    Movement,
    Orientation,
    post_position,
)
from .model import (
    Mdp,
    ModelError,
    Player,
    StateReward,
    StochasticGame,
    TransitionReward,
    validate_model,
)
from .scenario import (
    OBJECTIVES,
    Environment,
    Feature,
    FeatureType,
    Objective,
    QTableSet,
    RobotMode,
    RobotSpec,
    ScenarioSpec,
    ScenarioValidationError,
    TurnOrder,
    validate_scenario,
)

_CHUNK = 2048

# Action labels are packed ints. Nonnegative values are feature triples;
# small negatives are the special actions.
LABEL_STUCK = -1
_MOVE_LABELS = {Movement.LEFT: -2, Movement.STRAIGHT: -3, Movement.RIGHT: -4}
_MOVE_OF_LABEL = {v: k for k, v in _MOVE_LABELS.items()}
_ROBOT_LABELS = {"turn_left": -5, "turn_right": -6, "forward": -7}
_ROBOT_OF_LABEL = {v: k for k, v in _ROBOT_LABELS.items()}

_SLOT_BITS = 10
_SLOT_MAX = (1 << _SLOT_BITS) - 1  # reserved for the robot-as-obstacle slot
ROBOT_FID = -1  # synthetic feature id of the robot obstacle


class Variant(Enum):
    UNDERSPEC = "underspec"
    LOW_CONFIDENCE = "lowconf"
    UNIQUE_CLOSEST = "unique"


@dataclass(frozen=True)
class HumanModelConfig:
    """Which human-model variant to build, and at which temperature."""

    variant: Variant = Variant.UNDERSPEC
    temperature: float | None = None  # None: take the scenario's
    deadlock: str = "stuck"  # absorbing self-loop; the only supported policy

    def __post_init__(self) -> None:
        if self.temperature is not None and self.temperature <= 0:
            raise ScenarioValidationError(["temperature must be positive"])
        if self.deadlock != "stuck":
            raise ScenarioValidationError([f"unknown deadlock policy {self.deadlock!r}"])


def pack_triple(av: int | None, co: int | None, fo: int | None) -> int:
    """Feature-triple label: per slot 0 = none, fid+1, or the robot code."""
    def code(fid: int | None) -> int:
        if fid is None:
            return 0
        if fid == ROBOT_FID:
            return _SLOT_MAX
        if not 0 <= fid < _SLOT_MAX - 1:
            raise ModelError([f"feature id {fid} out of label range"])
        return fid + 1
    return (code(av) << (2 * _SLOT_BITS)) | (code(co) << _SLOT_BITS) | code(fo)


def unpack_triple(label: int) -> tuple[int | None, int | None, int | None]:
    def fid(code: int) -> int | None:
        if code == 0:
            return None
        if code == _SLOT_MAX:
            return ROBOT_FID
        return code - 1
    return (
        fid((label >> (2 * _SLOT_BITS)) & _SLOT_MAX),
        fid((label >> _SLOT_BITS) & _SLOT_MAX),
        fid(label & _SLOT_MAX),
    )


def format_label(label: int) -> str:
    label = int(label)
    if label == LABEL_STUCK:
        return "stuck"
    if label in _MOVE_OF_LABEL:
        return f"move:{_MOVE_OF_LABEL[label].name}"
    if label in _ROBOT_OF_LABEL:
        return f"robot:{_ROBOT_OF_LABEL[label]}"
    slots = unpack_triple(label)
    names = ["-" if f is None else ("robot" if f == ROBOT_FID else f"f{f}") for f in slots]
    return f"triple:o={names[0]},l={names[1]},w={names[2]}"


def movement_of_label(label: int) -> Movement | None:
    return _MOVE_OF_LABEL.get(int(label))


@dataclass
class ModelMeta:
    """Decoding information attached to every built model."""

    kind: str  # human | robot | sg | flagged
    spec: ScenarioSpec | None
    qtables: QTableSet | None = None
    temperature: float | None = None
    variant: Variant | None = None
    n_features: int = 0
    width: int = 0
    height: int = 0
    robot_bits: int = 0
    robot_states: tuple[int, ...] = ()  # packed robot cell*4+cardinal per index
    turn_order: TurnOrder | None = None
    mode: RobotMode | None = None
    feature_cells: tuple[int, ...] = ()
    stuck_pos: frozenset[int] = frozenset()
    base: "ModelMeta | None" = None  # for flagged models
    base_keys: tuple[int, ...] = ()
    original_state: np.ndarray | None = None
    flag_bits: int = 0

    def split_keys(self, keys: np.ndarray) -> dict[str, np.ndarray]:
        """Vectorised decode of payload keys into components."""
        out: dict[str, np.ndarray] = {}
        if self.kind == "flagged":
            out["vmask"] = keys & ((1 << self.flag_bits) - 1)
            orig = keys >> self.flag_bits
            out["orig"] = orig
            base_keys = np.asarray(self.base_keys, dtype=np.int64)[orig]
            out.update(self.base.split_keys(base_keys))
            return out
        k = keys
        if self.kind == "sg":
            out["turn"] = k & 1
            k = k >> 1
            out["robot"] = k & ((1 << self.robot_bits) - 1)
            k = k >> self.robot_bits
        out["mask"] = k & ((1 << self.n_features) - 1)
        out["pos"] = k >> self.n_features
        return out


class _Workspace:
    """Precomputed geometry tables plus the memoised action computation."""

    def __init__(self, spec: ScenarioSpec, qtables: QTableSet, temperature: float):
        env = spec.env
        self.spec = spec
        self.qtables = qtables
        self.temperature = temperature
        self.env = env
        self.width = env.grid_x + 1
        self.height = env.grid_y + 1
        self.n_cells = self.width * self.height
        self.n_pos = self.n_cells * ORIENTATION_COUNT
        self.features = env.features
        self.n_features = len(env.features)
        self.full_mask = (1 << self.n_features) - 1

        # post_table[pos, movement] = post position id, or -1 off-grid.
        self.post_table = np.full((self.n_pos, 3), -1, dtype=np.int64)
        for pos_id in range(self.n_pos):
            p = self.position_of(pos_id)
            for i, m in enumerate(MOVEMENTS):
                q = post_position(p, m)
                if env.on_grid(q.loc):
                    self.post_table[pos_id, i] = self.pos_id_of(q)
        self.stuck_pos = frozenset(
            int(p) for p in np.flatnonzero((self.post_table < 0).all(axis=1))
        )

        # Features present at each cell, as a bitmask over feature ids.
        self.cell_bits = np.zeros(self.n_cells, dtype=np.int64)
        for f in env.features:
            self.cell_bits[self.cell_of(f.loc)] |= 1 << f.fid
        self.by_type = {
            t: tuple(f for f in env.features if f.ftype == t) for t in FeatureType
        }
        # d2[fid][cell]: exact integer squared distance.
        xs = np.arange(self.n_cells) % self.width
        ys = np.arange(self.n_cells) // self.width
        self.d2 = np.empty((max(self.n_features, 1), self.n_cells), dtype=np.int64)
        for f in env.features:
            self.d2[f.fid] = (xs - f.loc.x) ** 2 + (ys - f.loc.y) ** 2

        self._memo: dict[Any, tuple] = {}

    # -- coordinates ---------------------------------------------------------

    def cell_of(self, loc: Location) -> int:
        return loc.y * self.width + loc.x

    def loc_of_cell(self, cell: int) -> Location:
        return Location(cell % self.width, cell // self.width)

    def pos_id_of(self, p: HumanPosition) -> int:
        return self.cell_of(p.loc) * ORIENTATION_COUNT + p.orient.index

    def position_of(self, pos_id: int) -> HumanPosition:
        cell, o = divmod(pos_id, ORIENTATION_COUNT)
        return HumanPosition(self.loc_of_cell(cell), Orientation(o))

    # -- behaviour -----------------------------------------------------------

    def closest_fids(self, pos_id: int, mask: int,
                     robot_cell: int | None) -> tuple[tuple[int, ...], ...]:
        """Per objective: sorted feature ids at minimal squared distance.

        The robot cell, when given, participates as a virtual obstacle with
        id ROBOT_FID; it is always present and never consumed.
        """
        cell = pos_id // ORIENTATION_COUNT
        out = []
        for o in OBJECTIVES:
            best: int | None = None
            fids: list[int] = []
            for f in self.by_type[o.feature_type]:
                if not mask >> f.fid & 1:
                    continue
                d = int(self.d2[f.fid, cell])
                if best is None or d < best:
                    best, fids = d, [f.fid]
                elif d == best:
                    fids.append(f.fid)
            if o is Objective.AVOID and robot_cell is not None:
                rx, ry = robot_cell % self.width, robot_cell // self.width
                x, y = cell % self.width, cell // self.width
                d = (rx - x) ** 2 + (ry - y) ** 2
                if best is None or d < best:
                    best, fids = d, [ROBOT_FID]
                elif d == best:
                    fids = [ROBOT_FID] + fids
            out.append(tuple(fids))
        return tuple(out)

    def feature_of(self, fid: int, robot_cell: int | None) -> Feature:
        if fid == ROBOT_FID:
            return Feature(FeatureType.OBSTACLE, self.loc_of_cell(robot_cell), ROBOT_FID)
        return self.features[fid]

    def actions_at(self, pos_id: int, mask: int,
                   robot_cell: int | None = None) -> tuple:
        """Memoised: ((label, probs, confident), ...) for a human situation.

        Empty when no movement is valid (the caller adds the stuck loop).
        Probabilities align with MOVEMENTS; invalid movements carry 0.
        """
        closest = self.closest_fids(pos_id, mask, robot_cell)
        key = (pos_id, closest,
               robot_cell if any(ROBOT_FID in c for c in closest) else None)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        pos = self.position_of(pos_id)
        features = {
            o: [self.feature_of(fid, robot_cell) for fid in fids]
            for o, fids in zip(OBJECTIVES, closest)
        }
        valuation = behavior.combine_closest(
            pos, features, self.qtables, self.spec.weights, self.env
        )
        actions = []
        for entry in valuation:
            label = pack_triple(*(f.fid if f is not None else None for f in entry.triple))
            probs = behavior.softmax(entry.values, self.temperature)
            actions.append((label, probs, entry.confident))
        result = tuple(actions)
        self._memo[key] = result
        return result

    def movement_actions(self, pos_id: int) -> tuple:
        """Low-confidence fallback: one deterministic action per valid movement."""
        out = []
        for i, m in enumerate(MOVEMENTS):
            if self.post_table[pos_id, i] >= 0:
                probs = tuple(1.0 if j == i else 0.0 for j in range(3))
                out.append((_MOVE_LABELS[m], probs, True))
        return tuple(out)


# ---------------------------------------------------------------------------
# Breadth-first model construction


def _bfs_build(model: StochasticGame, init_key: int,
               player_of: Callable[[int], Player],
               expand: Callable[[int], list]) -> None:
    """Explore from init_key; expand() must be pure (it may run on workers).

    Successor keys are resolved to indices in chunk order, so the numbering
    is breadth-first and independent of the worker count.
    """
    model.add_state(init_key, player_of(init_key))
    model.initial = 0
    head = 0
    payloads = model.payloads
    while head < model.n_states:
        chunk = list(payloads[head:head + _CHUNK])
        results = parallel_map(expand, chunk)
        for offset, actions in enumerate(results):
            state = head + offset
            for label, branches in actions:
                resolved = []
                for prob, succ_key in branches:
                    j = model.state_index(succ_key)
                    if j is None:
                        j = model.add_state(succ_key, player_of(succ_key))
                    resolved.append((prob, j))
                model.add_action(state, label, resolved)
        head += len(chunk)


def _human_expand(ws: _Workspace, variant: Variant, key: int,
                  robot_cell: int | None = None) -> list:
    """Actions and successor keys of one human situation."""
    mask = key & ws.full_mask
    pos_id = key >> ws.n_features

    acts = ws.actions_at(pos_id, mask, robot_cell)
    if not acts:
        return [(LABEL_STUCK, [(1.0, key)])]
    if variant is Variant.LOW_CONFIDENCE and not all(conf for _, _, conf in acts):
        acts = ws.movement_actions(pos_id)

    def succ(movement_index: int) -> int:
        post = int(ws.post_table[pos_id, movement_index])
        new_mask = mask & ~int(ws.cell_bits[post // ORIENTATION_COUNT])
        return (post << ws.n_features) | new_mask

    out = []
    for label, probs, _conf in acts:
        out.append((label, [(p, succ(i)) for i, p in enumerate(probs) if p > 0.0]))
    return out


def _attach_human_formatters(model: StochasticGame, meta: ModelMeta) -> None:
    width = meta.width

    def fmt(key: int) -> str:
        parts = meta.split_keys(np.asarray([key], dtype=np.int64))
        pos_id = int(parts["pos"][0])
        mask = int(parts["mask"][0])
        cell, o = divmod(pos_id, ORIENTATION_COUNT)
        present = ",".join(
            f"f{i}" for i in range(meta.n_features) if mask >> i & 1
        )
        text = f"x={cell % width},y={cell // width},o={o},present=[{present}]"
        if "robot" in parts:
            rcell, rcard = divmod(meta.robot_states[int(parts["robot"][0])], 4)
            turn = "human" if int(parts["turn"][0]) == 0 else "robot"
            text += (f";rx={rcell % width},ry={rcell // width},ro={rcard},turn={turn}")
        if "vmask" in parts:
            bits = max(meta.flag_bits, 1)
            text += f";visited={int(parts['vmask'][0]):0{bits}b}"
        return text

    model.payload_formatter = fmt
    model.label_formatter = format_label


def build_human_mdp(spec: ScenarioSpec, qtables: QTableSet,
                    config: HumanModelConfig | None = None) -> Mdp:
    """Explicit MDP of the human behaviour over reachable situations.

    Each action is a closest-feature triple whose branches are the softmax
    distribution over movement effects; situations without any valid movement
    get a single absorbing stuck action.
    """
    config = config or HumanModelConfig()
    if config.variant is Variant.LOW_CONFIDENCE:
        return build_human_mdp_low_confidence(spec, qtables, config)
    if config.variant is Variant.UNIQUE_CLOSEST:
        base = _build_human(spec, qtables, config, Variant.UNDERSPEC)
        resolved = resolve_underspecification(base)
        resolved.meta = dataclasses.replace(resolved.meta, variant=Variant.UNIQUE_CLOSEST)
        return resolved
    return _build_human(spec, qtables, config, Variant.UNDERSPEC)


def build_human_mdp_low_confidence(spec: ScenarioSpec, qtables: QTableSet,
                                   config: HumanModelConfig | None = None) -> Mdp:
    """Low-confidence variant: wherever the valuation touches a non-confident
    table cell, the adversary selects a movement with probability 1."""
    if not qtables.has_confidence:
        raise ScenarioValidationError(["q-tables carry no confidence flags"])
    config = config or HumanModelConfig(Variant.LOW_CONFIDENCE)
    return _build_human(spec, qtables, config, Variant.LOW_CONFIDENCE)


def _build_human(spec: ScenarioSpec, qtables: QTableSet,
                 config: HumanModelConfig, variant: Variant) -> Mdp:
    validate_scenario(spec)
    temperature = config.temperature if config.temperature is not None else spec.temperature
    ws = _Workspace(spec, qtables, temperature)
    model = Mdp(player=Player.BOX, int_labels=True)
    init_key = (ws.pos_id_of(spec.init_h) << ws.n_features) | ws.full_mask

    def expand(key: int) -> list:
        return _human_expand(ws, variant, key)

    _bfs_build(model, init_key, lambda _k: Player.BOX, expand)
    model.freeze()
    model.meta = ModelMeta(
        kind="human", spec=spec, qtables=qtables, temperature=temperature,
        variant=variant, n_features=ws.n_features, width=ws.width, height=ws.height,
        feature_cells=tuple(sorted({ws.cell_of(f.loc) for f in ws.features})),
        stuck_pos=ws.stuck_pos,
    )
    _attach_human_formatters(model, model.meta)
    validate_model(model)
    return model


def build_human_model(spec: ScenarioSpec, qtables: QTableSet,
                      variant: str | Variant = Variant.UNDERSPEC,
                      temperature: float | None = None) -> Mdp:
    """Dispatcher over the three human-model variants."""
    v = Variant(variant) if isinstance(variant, str) else variant
    return build_human_mdp(spec, qtables, HumanModelConfig(v, temperature))


# ---------------------------------------------------------------------------
# Robot


def build_robot_mdp(robot: RobotSpec, env: Environment) -> Mdp:
    """Deterministic robot MDP: turn 90 degrees in place or move forward."""
    if not env.on_grid(robot.start.loc):
        raise ScenarioValidationError(["robot start off-grid"])
    if robot.start.orient.index % 2:
        raise ScenarioValidationError(["robot orientation must be cardinal"])
    width = env.grid_x + 1

    def expand(key: int) -> list:
        cell, card = divmod(key, 4)
        out = [
            (_ROBOT_LABELS["turn_left"], [(1.0, cell * 4 + (card + 1) % 4)]),
            (_ROBOT_LABELS["turn_right"], [(1.0, cell * 4 + (card - 1) % 4)]),
        ]
        x, y = cell % width, cell // width
        dx, dy = ((1, 0), (0, 1), (-1, 0), (0, -1))[card]
        if env.on_grid(Location(x + dx, y + dy)):
            out.append(
                (_ROBOT_LABELS["forward"], [(1.0, ((y + dy) * width + x + dx) * 4 + card)])
            )
        return out

    model = Mdp(player=Player.CIRCLE, int_labels=True)
    start = (robot.start.loc.y * width + robot.start.loc.x) * 4 \
        + robot.start.orient.index // 2
    _bfs_build(model, start, lambda _k: Player.CIRCLE, expand)
    model.freeze()
    model.meta = ModelMeta(kind="robot", spec=None, width=width, height=env.grid_y + 1)

    def fmt(key: int) -> str:
        cell, card = divmod(int(key), 4)
        return f"rx={cell % width},ry={cell // width},ro={card}"

    model.payload_formatter = fmt
    model.label_formatter = format_label
    validate_model(model)
    return model


def _robot_table(robot_model: Mdp, width: int):
    """Robot states as packed cell*4+cardinal plus per-state action lists.

    Accepts built robot MDPs and imported ones whose state labels read
    rx=..,ry=..,ro=.. (comma, space or equals separated).
    """
    packed = []
    built = getattr(robot_model, "meta", None) is not None and \
        getattr(robot_model.meta, "kind", None) == "robot"
    for s in range(robot_model.n_states):
        payload = robot_model.payloads[s]
        if built and isinstance(payload, int):
            packed.append(int(payload))
            continue
        text = str(payload).replace(",", " ").replace("=", " ")
        tokens = text.split()
        fields = dict(zip(tokens[0::2], tokens[1::2]))
        try:
            x, y, o = int(fields["rx"]), int(fields["ry"]), int(fields["ro"])
        except (KeyError, ValueError):
            raise ModelError(
                [f"robot state {s} label {payload!r} is not rx=..,ry=..,ro=.."]
            ) from None
        packed.append((y * width + x) * 4 + o)
    actions = [robot_model.actions(s) for s in range(robot_model.n_states)]
    return tuple(packed), actions


def compose_sg(spec: ScenarioSpec, qtables: QTableSet,
               config: HumanModelConfig | None = None,
               robot_model: Mdp | None = None) -> StochasticGame:
    """Turn-based stochastic game of the human against the robot.

    Box states carry the human actions, Circle states the robot's; turns
    strictly alternate (a stuck human waits out its turns). In obstacle mode
    the robot's current cell acts as an additional present obstacle in the
    human's closest-feature computation; it is never consumed, and the human
    treats the robot as if it were static.
    """
    if spec.robot is None:
        raise ScenarioValidationError(["no robot in scenario"])
    validate_scenario(spec)
    config = config or HumanModelConfig()
    if config.variant is Variant.LOW_CONFIDENCE and not qtables.has_confidence:
        raise ScenarioValidationError(["q-tables carry no confidence flags"])
    mode = spec.robot.mode
    if mode is RobotMode.OBSTACLE and spec.robot.start.loc == spec.init_h.loc:
        raise ScenarioValidationError(
            ["robot and human start on the same cell in obstacle mode"]
        )
    temperature = config.temperature if config.temperature is not None else spec.temperature
    ws = _Workspace(spec, qtables, temperature)
    if robot_model is None:
        robot_model = build_robot_mdp(spec.robot, spec.env)
    elif not robot_model.frozen or not robot_model.validated:
        validate_model(robot_model)
    robot_states, robot_actions = _robot_table(robot_model, ws.width)
    robot_bits = max(1, (robot_model.n_states - 1).bit_length())
    if ws.n_pos.bit_length() + ws.n_features + robot_bits + 1 > 62:
        raise ModelError(["packed game state exceeds 62 bits; scenario too large"])

    def pack(human_key: int, robot_idx: int, turn: int) -> int:
        return ((human_key << robot_bits) | robot_idx) << 1 | turn

    def player_of(key: int) -> Player:
        return Player.BOX if key & 1 == 0 else Player.CIRCLE

    def expand(key: int) -> list:
        turn = key & 1
        robot_idx = (key >> 1) & ((1 << robot_bits) - 1)
        human_key = key >> (1 + robot_bits)
        if turn == 0:
            robot_cell = robot_states[robot_idx] // 4 if mode is RobotMode.OBSTACLE else None
            acts = _human_expand(ws, config.variant, human_key, robot_cell)
            return [
                (label, [(p, pack(sk, robot_idx, 1)) for p, sk in branches])
                for label, branches in acts
            ]
        return [
            (label, [(p, pack(human_key, tgt, 0)) for p, tgt in branches])
            for label, branches in robot_actions[robot_idx]
        ]

    init_human = (ws.pos_id_of(spec.init_h) << ws.n_features) | ws.full_mask
    init_turn = 0 if spec.robot.turn_order is TurnOrder.HUMAN_FIRST else 1
    game = StochasticGame(int_labels=True)
    _bfs_build(game, pack(init_human, robot_model.initial, init_turn),
               player_of, expand)
    game.freeze()
    game.meta = ModelMeta(
        kind="sg", spec=spec, qtables=qtables, temperature=temperature,
        variant=config.variant, n_features=ws.n_features, width=ws.width,
        height=ws.height, robot_bits=robot_bits, robot_states=robot_states,
        turn_order=spec.robot.turn_order, mode=mode,
        feature_cells=tuple(sorted({ws.cell_of(f.loc) for f in ws.features})),
        stuck_pos=ws.stuck_pos,
    )
    _attach_human_formatters(game, game.meta)
    validate_model(game)
    return game


# ---------------------------------------------------------------------------
# Rewards


def _meta_of(model: StochasticGame) -> ModelMeta:
    meta = getattr(model, "meta", None)
    if meta is None:
        raise ModelError(["model carries no scenario metadata"])
    return meta


def _type_mask(spec: ScenarioSpec, objective: Objective) -> int:
    mask = 0
    for f in spec.env.features:
        if f.ftype == objective.feature_type:
            mask |= 1 << f.fid
    return mask


def objective_reward(model: StochasticGame, objective: Objective) -> TransitionReward:
    """Indicator transition reward: 1 exactly where a feature of the
    objective's type disappears along the transition."""
    meta = _meta_of(model)
    parts = meta.split_keys(np.asarray(model.payloads, dtype=np.int64))
    masks = parts["mask"]
    tmask = _type_mask(meta.spec, objective)
    src = masks[model.branch_state]
    tgt = masks[model.branch_targets]
    return TransitionReward((((src ^ tgt) & tmask) != 0).astype(float))


@dataclass
class FlaggedModel:
    """first_time_flags output: the reward-equivalent state-reward encoding."""

    model: Mdp
    rewards: dict[Objective, StateReward]
    original_state: np.ndarray  # new state index -> original state index

    def lift_targets(self, targets: Iterable[int] | np.ndarray) -> np.ndarray:
        if isinstance(targets, np.ndarray) and targets.dtype == bool:
            return targets[self.original_state]
        t = set(int(x) for x in targets)
        return np.asarray([int(o) in t for o in self.original_state], dtype=bool)


def first_time_flags(model: Mdp) -> FlaggedModel:
    """Re-encode objective rewards as state rewards via first-visit flags.

    Every feature-bearing cell gets a visited flag; a state whose cell was
    consumed on arrival (features absent, flag still clear) earns the reward
    upon leaving it, after which the flag sets. Expected rewards match the
    transition-reward encoding whenever no reward-carrying transition enters
    the target set directly.
    """
    meta = _meta_of(model)
    if meta.kind != "human":
        raise ModelError(["first_time_flags needs a built human MDP"])
    cells = meta.feature_cells
    cell_index = {c: i for i, c in enumerate(cells)}
    n_flags = len(cells)
    parts = meta.split_keys(np.asarray(model.payloads, dtype=np.int64))
    pos_cells = parts["pos"] // ORIENTATION_COUNT
    masks = parts["mask"]
    spec = meta.spec
    cell_bits = {c: 0 for c in cells}
    for f in spec.env.features:
        cell_bits[f.loc.y * meta.width + f.loc.x] |= 1 << f.fid

    def expand(key: int) -> list:
        vmask = key & ((1 << n_flags) - 1)
        orig = key >> n_flags
        c = int(pos_cells[orig])
        out_v = vmask
        if c in cell_index and (int(masks[orig]) & cell_bits[c]) == 0:
            out_v |= 1 << cell_index[c]
        return [
            (label, [(p, (t << n_flags) | out_v) for p, t in branches])
            for label, branches in model.actions(orig)
        ]

    flagged = Mdp(player=Player.BOX, int_labels=True)
    _bfs_build(flagged, int(model.initial) << n_flags, lambda _k: Player.BOX, expand)
    flagged.freeze()
    keys = np.asarray(flagged.payloads, dtype=np.int64)
    original = keys >> n_flags
    vmasks = keys & ((1 << n_flags) - 1)

    rewards: dict[Objective, StateReward] = {}
    for o in OBJECTIVES:
        tmask = _type_mask(spec, o)
        values = np.zeros(flagged.n_states)
        for s in range(flagged.n_states):
            orig = int(original[s])
            c = int(pos_cells[orig])
            if c not in cell_index or vmasks[s] >> cell_index[c] & 1:
                continue
            bits = cell_bits[c]
            if (int(masks[orig]) & bits) == 0 and (bits & tmask) != 0:
                values[s] = 1.0
        rewards[o] = StateReward(values)

    flagged.meta = dataclasses.replace(
        meta, kind="flagged", base=meta, base_keys=tuple(model.payloads),
        original_state=original, flag_bits=n_flags,
    )
    _attach_human_formatters(flagged, flagged.meta)
    validate_model(flagged)
    return FlaggedModel(flagged, rewards, original)


# ---------------------------------------------------------------------------
# Game reductions


def _rebuild_filtered(model: StochasticGame, cls,
                      keep: np.ndarray | None,
                      player_array: np.ndarray) -> StochasticGame:
    out = cls(int_labels=isinstance(model.action_labels, np.ndarray))
    for s in range(model.n_states):
        out.add_state(model.payloads[s], Player(int(player_array[s])))
    for s in range(model.n_states):
        base = int(model.action_offsets[s])
        for local, (label, branches) in enumerate(model.actions(s)):
            if keep is None or keep[base + local]:
                out.add_action(s, label, branches)
    out.initial = model.initial
    out.freeze()
    out.meta = getattr(model, "meta", None)
    out.payload_formatter = model.payload_formatter
    out.label_formatter = model.label_formatter
    validate_model(out)
    return out


def coalition_mdp(game: StochasticGame) -> Mdp:
    """Hand all nondeterminism to one controller: same graph, one player."""
    if not game.frozen:
        game.freeze()
    players = np.full(game.n_states, Player.CIRCLE.value, dtype=np.int8)
    return _rebuild_filtered(game, Mdp, None, players)


def resolve_underspecification(model: StochasticGame) -> StochasticGame:
    """Keep, per human state, only the tie-broken closest-feature action.

    The tie-break is the exact one of unique_closest: smallest absolute
    bearing, then left over right. Movement and stuck actions (low-confidence
    variant) are untouched; robot states keep all their actions.
    """
    meta = _meta_of(model)
    if meta.qtables is None:
        raise ModelError(["model metadata lacks the q-tables"])
    ws = _Workspace(meta.spec, meta.qtables,
                    meta.temperature if meta.temperature is not None
                    else meta.spec.temperature)
    parts = meta.split_keys(np.asarray(model.payloads, dtype=np.int64))
    keep = np.ones(model.n_actions, dtype=bool)
    offsets = model.action_offsets

    for s in range(model.n_states):
        lo, hi = int(offsets[s]), int(offsets[s + 1])
        if hi - lo <= 1:
            continue
        labels = [int(model.action_labels[a]) for a in range(lo, hi)]
        if any(lbl < 0 for lbl in labels):
            continue
        pos_id = int(parts["pos"][s])
        mask = int(parts["mask"][s])
        robot_cell = None
        if meta.kind == "sg" and meta.mode is RobotMode.OBSTACLE:
            robot_cell = meta.robot_states[int(parts["robot"][s])] // 4
        pos = ws.position_of(pos_id)
        picks: list[int | None] = []
        for fids in ws.closest_fids(pos_id, mask, robot_cell):
            if not fids:
                picks.append(None)
            elif len(fids) == 1:
                picks.append(fids[0])
            else:
                best = behavior.pick_unique(
                    pos, [ws.feature_of(fid, robot_cell) for fid in fids]
                )
                picks.append(best.fid)
        wanted = pack_triple(*picks)
        if wanted not in labels:
            raise ModelError(
                [f"state {s}: tie-broken action {format_label(wanted)} not present"]
            )
        for a in range(lo, hi):
            keep[a] = int(model.action_labels[a]) == wanted

    return _rebuild_filtered(model, type(model), keep, model.player_array)


# ---------------------------------------------------------------------------
# Target-state labels


def target_states(model: StochasticGame, label: str) -> np.ndarray:
    """Resolve a property label to a boolean state mask.

    Labels: goal, stuck, done (goal or stuck), robot_goal (games only),
    all_litter_collected, all_obstacles_hit, all_waypoints_visited and
    feature_<id>_consumed.
    """
    meta = _meta_of(model)
    parts = meta.split_keys(np.asarray(model.payloads, dtype=np.int64))
    spec = meta.spec
    width = meta.width

    if label == "goal":
        cells = [c.y * width + c.x for c in spec.env.goal.cells]
        return np.isin(parts["pos"] // ORIENTATION_COUNT, cells or [-1])
    if label == "stuck":
        return np.isin(parts["pos"], list(meta.stuck_pos) or [-1])
    if label == "done":
        return target_states(model, "goal") | target_states(model, "stuck")
    if label == "robot_goal":
        if meta.kind != "sg" or spec.robot is None:
            raise ModelError(["robot_goal needs a game with a robot"])
        cells = [c.y * width + c.x for c in spec.robot.goal.cells]
        rstates = np.asarray(meta.robot_states, dtype=np.int64)
        rcells = rstates[parts["robot"]] // 4
        return np.isin(rcells, cells or [-1])
    per_type = {
        "all_litter_collected": Objective.COLLECT,
        "all_obstacles_hit": Objective.AVOID,
        "all_waypoints_visited": Objective.FOLLOW,
    }
    if label in per_type:
        tmask = _type_mask(spec, per_type[label])
        return (parts["mask"] & tmask) == 0
    if label.startswith("feature_") and label.endswith("_consumed"):
        try:
            fid = int(label[len("feature_"):-len("_consumed")])
        except ValueError:
            raise ModelError([f"malformed label {label!r}"]) from None
        if not 0 <= fid < meta.n_features:
            raise ModelError([f"no feature with id {fid}"])
        return (parts["mask"] >> fid & 1) == 0
    raise ModelError([f"unknown target label {label!r}"])
