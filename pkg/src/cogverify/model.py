"""Explicit-state probabilistic models: stochastic games, MDPs, Markov chains.

Models are accumulated state by state (actions of a state must be added
contiguously and states in ascending order, which every producer here does),
then frozen into flat numpy arrays:

    action_offsets[s] .. action_offsets[s+1]   actions of state s
    branch_offsets[a] .. branch_offsets[a+1]   branches of flat action a
    branch_probs / branch_targets              one entry per branch

The flat layout is what the checker's vectorised Bellman sweeps operate on.
After freeze() a model is immutable and safe to read concurrently.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np

DISTRIBUTION_TOLERANCE = 1e-9


class ModelError(ValueError):
    """Raised for malformed models; carries every detected problem."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = tuple(problems)


class Player(Enum):
    CIRCLE = 0  # controllable (the robot)
    BOX = 1     # uncontrollable (the human / environment)


class Direction(Enum):
    MIN = "min"
    MAX = "max"


class StochasticGame:
    """Turn-based two-player stochastic game over an explicit sparse graph."""

    kind = "sg"

    def __init__(self, int_labels: bool = False):
        self._payloads: list[Any] = []
        self._index: dict[Any, int] = {}
        self._player = array("b")
        self._action_counts = array("q")
        self._last_action_state = -1
        self._labels_are_ints = int_labels
        self._action_labels: Any = array("q") if int_labels else []
        self._branch_counts = array("q")
        self._branch_probs = array("d")
        self._branch_targets = array("q")
        self._frozen = False
        self.initial: int | None = None
        # Optional pretty-printers and metadata, set by producers.
        self.payload_formatter: Callable[[Any], str] | None = None
        self.label_formatter: Callable[[Any], str] | None = None
        self.meta: Any = None
        self._validated = False

    # -- construction -------------------------------------------------------

    def add_state(self, payload: Any, player: Player = Player.BOX) -> int:
        if self._frozen:
            raise ModelError(["model is frozen"])
        if payload in self._index:
            raise ModelError([f"duplicate state payload {payload!r}"])
        idx = len(self._payloads)
        self._payloads.append(payload)
        self._index[payload] = idx
        self._player.append(player.value)
        self._action_counts.append(0)
        return idx

    def state_index(self, payload: Any) -> int | None:
        return self._index.get(payload)

    def add_action(self, state: int, label: Any,
                   branches: Iterable[tuple[float, int]]) -> None:
        """Append one action; zero-probability branches are dropped here.

        A state's actions must be added contiguously and states in ascending
        order, so the flat arrays stay sorted without a final sort.
        """
        if self._frozen:
            raise ModelError(["model is frozen"])
        if state < self._last_action_state or state >= len(self._payloads):
            raise ModelError([f"actions must be added in state order (state {state})"])
        self._last_action_state = state
        kept = 0
        for prob, target in branches:
            if prob == 0.0:
                continue
            self._branch_probs.append(prob)
            self._branch_targets.append(target)
            kept += 1
        self._branch_counts.append(kept)
        self._action_labels.append(label)
        self._action_counts[state] += 1

    def freeze(self) -> "StochasticGame":
        if not self._frozen:
            self.action_offsets = np.concatenate(
                ([0], np.cumsum(np.array(self._action_counts, dtype=np.int64)))
            ).astype(np.int64)
            self.branch_offsets = np.concatenate(
                ([0], np.cumsum(np.array(self._branch_counts, dtype=np.int64)))
            ).astype(np.int64)
            self.branch_probs = np.array(self._branch_probs, dtype=np.float64)
            self.branch_targets = np.array(self._branch_targets, dtype=np.int64)
            self.player_array = np.array(self._player, dtype=np.int8)
            if self._labels_are_ints:
                self.action_labels = np.array(self._action_labels, dtype=np.int64)
            else:
                self.action_labels = tuple(self._action_labels)
            del self._action_counts, self._branch_counts
            del self._branch_probs, self._branch_targets
            del self._player, self._action_labels
            self._frozen = True
            self._action_state_cache: np.ndarray | None = None
            self._branch_action_cache: np.ndarray | None = None
        return self

    # -- frozen accessors ---------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def n_states(self) -> int:
        return len(self._payloads)

    @property
    def n_actions(self) -> int:
        return int(self.action_offsets[-1]) if self._frozen else len(self._action_labels)

    @property
    def n_branches(self) -> int:
        return len(self.branch_probs) if self._frozen else len(self._branch_probs)

    @property
    def payloads(self) -> Sequence[Any]:
        return self._payloads

    @property
    def action_state(self) -> np.ndarray:
        """Owning state per flat action index."""
        if self._action_state_cache is None:
            counts = np.diff(self.action_offsets)
            self._action_state_cache = np.repeat(
                np.arange(self.n_states, dtype=np.int64), counts
            )
        return self._action_state_cache

    @property
    def branch_action(self) -> np.ndarray:
        """Owning flat action per branch index."""
        if self._branch_action_cache is None:
            counts = np.diff(self.branch_offsets)
            self._branch_action_cache = np.repeat(
                np.arange(self.n_actions, dtype=np.int64), counts
            )
        return self._branch_action_cache

    @property
    def branch_state(self) -> np.ndarray:
        return self.action_state[self.branch_action]

    def action_count(self, state: int) -> int:
        return int(self.action_offsets[state + 1] - self.action_offsets[state])

    def actions(self, state: int) -> list[tuple[Any, tuple[tuple[float, int], ...]]]:
        """(label, ((prob, target), ...)) per action of a state."""
        out = []
        for a in range(*self.action_offsets[state:state + 2]):
            lo, hi = self.branch_offsets[a], self.branch_offsets[a + 1]
            branches = tuple(
                (float(self.branch_probs[b]), int(self.branch_targets[b]))
                for b in range(lo, hi)
            )
            out.append((self.action_labels[a], branches))
        return out

    def player(self, state: int) -> Player:
        return Player(int(self.player_array[state]))

    def states_of(self, player: Player) -> np.ndarray:
        return np.flatnonzero(self.player_array == player.value)

    def state_label(self, state: int) -> str:
        payload = self._payloads[state]
        if self.payload_formatter is not None:
            return self.payload_formatter(payload)
        return str(payload)

    def action_label_str(self, state: int, action: int) -> str:
        label = self.action_labels[self.action_offsets[state] + action]
        if self.label_formatter is not None:
            return self.label_formatter(label)
        return str(label)

    def mark_validated(self) -> None:
        self._validated = True

    @property
    def validated(self) -> bool:
        return self._validated


class Mdp(StochasticGame):
    """One-player stochastic game."""

    kind = "mdp"

    def __init__(self, player: Player = Player.BOX, int_labels: bool = False):
        super().__init__(int_labels=int_labels)
        self._uniform_player = player

    def add_state(self, payload: Any, player: Player | None = None) -> int:
        return super().add_state(payload, player or self._uniform_player)

    def as_markov_chain(self) -> "MarkovChain":
        """Reinterpret as a Markov chain; requires one action per state."""
        counts = np.diff(self.action_offsets)
        if not np.all(counts == 1):
            bad = np.flatnonzero(counts != 1)[:5]
            raise ModelError(
                [f"state {int(s)} has {int(counts[s])} actions, chain needs 1" for s in bad]
            )
        chain = MarkovChain.__new__(MarkovChain)
        chain.__dict__.update(self.__dict__)
        return chain


class MarkovChain(Mdp):
    """Zero-player model: exactly one action per state."""

    kind = "mc"


def validate_model(model: StochasticGame) -> None:
    """Check Definition-level invariants; raise ModelError listing all offences."""
    if not model.frozen:
        model.freeze()
    problems: list[str] = []
    counts = np.diff(model.action_offsets)
    for s in np.flatnonzero(counts == 0)[:20]:
        problems.append(f"state {int(s)} has no actions")
    if isinstance(model, MarkovChain):
        for s in np.flatnonzero(counts > 1)[:20]:
            problems.append(f"chain state {int(s)} has {int(counts[s])} actions")
    if model.n_branches:
        if model.branch_targets.min(initial=0) < 0 or \
                model.branch_targets.max(initial=0) >= model.n_states:
            problems.append("branch target out of range")
        if np.any(model.branch_probs <= 0) or np.any(model.branch_probs > 1):
            problems.append("branch probability outside (0, 1]")
        sums = np.zeros(model.n_actions)
        np.add.at(sums, model.branch_action, model.branch_probs)
        bad = np.flatnonzero(np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE)
        for a in bad[:20]:
            s = int(model.action_state[a])
            problems.append(
                f"distribution of state {s} action "
                f"{int(a - model.action_offsets[s])} sums to {sums[a]!r}"
            )
    empty = np.flatnonzero(np.diff(model.branch_offsets) == 0)
    for a in empty[:20]:
        s = int(model.action_state[a])
        problems.append(f"state {s} action {int(a - model.action_offsets[s])} has no branches")
    if model.initial is None or not 0 <= model.initial < model.n_states:
        problems.append(f"initial state {model.initial!r} out of range")
    if problems:
        raise ModelError(problems)
    model.mark_validated()


# ---------------------------------------------------------------------------
# Schedulers and induced chains


@dataclass
class Scheduler:
    """Memoryless deterministic choice: per-state action index, -1 = unset."""

    choices: np.ndarray
    player: Player | None = None

    @classmethod
    def empty(cls, n_states: int, player: Player | None = None) -> "Scheduler":
        return cls(np.full(n_states, -1, dtype=np.int64), player)

    def serialize(self, model: StochasticGame) -> str:
        """Human-readable `state-payload -> action-label` listing."""
        lines = []
        for s in range(model.n_states):
            a = int(self.choices[s])
            if a < 0:
                continue
            lines.append(f"{model.state_label(s)} -> {model.action_label_str(s, a)}")
        return "\n".join(lines) + "\n"


def induced_chain(model: StochasticGame,
                  circle: Scheduler | None = None,
                  box: Scheduler | None = None) -> MarkovChain:
    """Fix one scheduler per player; keep only the scheduled distributions."""
    if not model.frozen:
        model.freeze()
    per_player = {Player.CIRCLE: circle, Player.BOX: box}
    chain = MarkovChain()
    chain.initial = model.initial
    for s in range(model.n_states):
        chain.add_state(model.payloads[s], model.player(s))
    chosen = np.empty(model.n_states, dtype=np.int64)
    for s in range(model.n_states):
        n_actions = model.action_count(s)
        if n_actions == 1:
            chosen[s] = 0
            continue
        sched = per_player[model.player(s)]
        a = -1 if sched is None else int(sched.choices[s])
        if a < 0 or a >= n_actions:
            raise ModelError(
                [f"scheduler for {model.player(s).name} misses state {s}"]
            )
        chosen[s] = a
    for s in range(model.n_states):
        flat = int(model.action_offsets[s] + chosen[s])
        lo, hi = model.branch_offsets[flat], model.branch_offsets[flat + 1]
        chain.add_action(
            s,
            model.action_labels[flat],
            [(float(model.branch_probs[b]), int(model.branch_targets[b]))
             for b in range(lo, hi)],
        )
    chain.payload_formatter = model.payload_formatter
    chain.label_formatter = model.label_formatter
    chain.freeze()
    return chain


# ---------------------------------------------------------------------------
# Rewards


@dataclass
class StateReward:
    """Reward earned upon leaving a state; one value per state."""

    values: np.ndarray


@dataclass
class StateActionReward:
    """One value per flat action index."""

    values: np.ndarray


@dataclass
class TransitionReward:
    """One value per flat branch index."""

    values: np.ndarray


RewardFunction = StateReward | StateActionReward | TransitionReward


def rescale_transition_rewards(model: StochasticGame,
                               reward: TransitionReward) -> StateActionReward:
    """Expected branch reward per action: r'(s,a) = sum_t P(s,a,t) * r(s,a,t).

    Preserves expected cumulative reward to every target set.
    """
    if not model.frozen:
        model.freeze()
    if len(reward.values) != model.n_branches:
        raise ModelError(
            [f"transition reward has {len(reward.values)} entries, "
             f"model has {model.n_branches} branches"]
        )
    out = np.zeros(model.n_actions)
    np.add.at(out, model.branch_action, model.branch_probs * reward.values)
    return StateActionReward(out)


def to_state_action_reward(model: StochasticGame,
                           reward: RewardFunction) -> StateActionReward:
    """Normalise any reward variant to per-action values."""
    if isinstance(reward, StateActionReward):
        if len(reward.values) != model.n_actions:
            raise ModelError(["state-action reward length mismatch"])
        return reward
    if isinstance(reward, TransitionReward):
        return rescale_transition_rewards(model, reward)
    if len(reward.values) != model.n_states:
        raise ModelError(["state reward length mismatch"])
    return StateActionReward(np.asarray(reward.values, dtype=float)[model.action_state])


# ---------------------------------------------------------------------------
# Properties


class PropertyKind(Enum):
    REACH = "reach"
    BOUNDED_REACH = "bounded_reach"
    EXPECTED_REWARD = "expected_reward"


@dataclass(frozen=True)
class Property:
    """A checkable query: reachability or expected reward of a target set."""

    kind: PropertyKind
    direction: Direction
    target_label: str
    step_bound: int | None = None
    reward_name: str | None = None
    bound: float | None = None
    bound_op: str | None = None  # one of <=, <, >=, >

    def describe(self) -> str:
        letter = "E" if self.kind is PropertyKind.EXPECTED_REWARD else "P"
        step = f"<={self.step_bound}" if self.step_bound is not None else ""
        text = f"{letter}{self.direction.value}(F{step} {self.target_label})"
        if self.bound is not None:
            text += f" {self.bound_op} {self.bound:g}"
        return text


# ---------------------------------------------------------------------------
# Line-oriented exchange format


def export_explicit(model: StochasticGame) -> str:
    """Serialize to the line-oriented exchange format (see README)."""
    if not model.frozen:
        model.freeze()
    lines = [
        "cogmodel 1",
        f"kind {model.kind}",
        f"states {model.n_states}",
        f"initial {model.initial}",
        f"transitions {model.n_branches}",
    ]
    for s in range(model.n_states):
        for local, a in enumerate(range(*model.action_offsets[s:s + 2])):
            for b in range(*model.branch_offsets[a:a + 2]):
                lines.append(
                    f"{s} {local} {model.branch_probs[b]!r} {int(model.branch_targets[b])}"
                )
    if model.kind == "sg":
        lines.append("players")
        for s in range(model.n_states):
            lines.append(f"{s} {model.player(s).name.lower()}")
    lines.append("statelabels")
    for s in range(model.n_states):
        lines.append(f"{s} {model.state_label(s)}")
    lines.append("actionlabels")
    for s in range(model.n_states):
        for local in range(model.action_count(s)):
            lines.append(f"{s} {local} {model.action_label_str(s, local)}")
    return "\n".join(lines) + "\n"


def import_explicit(text: str) -> StochasticGame:
    """Parse the exchange format back into a frozen, validated model."""
    lines = [ln.split("#", 1)[0].rstrip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not lines or lines[0][1].split() != ["cogmodel", "1"]:
        raise ModelError(["not a cogmodel file (missing 'cogmodel 1' header)"])

    header: dict[str, str] = {}
    pos = 1
    while pos < len(lines):
        tokens = lines[pos][1].split()
        if tokens[0] in ("kind", "states", "initial", "transitions") and len(tokens) == 2:
            header[tokens[0]] = tokens[1]
            pos += 1
        else:
            break
    for key in ("kind", "states", "initial", "transitions"):
        if key not in header:
            raise ModelError([f"missing header line {key!r}"])
    kind = header["kind"]
    if kind not in ("sg", "mdp", "mc"):
        raise ModelError([f"unknown model kind {kind!r}"])
    n_states = int(header["states"])
    n_transitions = int(header["transitions"])

    transitions: dict[int, dict[int, list[tuple[float, int]]]] = {}
    players: dict[int, Player] = {}
    state_labels: dict[int, str] = {}
    action_labels: dict[tuple[int, int], str] = {}
    section = "transitions"
    seen = 0
    for lineno, line in lines[pos:]:
        tokens = line.split()
        if tokens[0] in ("players", "statelabels", "actionlabels") and len(tokens) == 1:
            section = tokens[0]
            continue
        try:
            if section == "transitions":
                s, a, p, t = int(tokens[0]), int(tokens[1]), float(tokens[2]), int(tokens[3])
                transitions.setdefault(s, {}).setdefault(a, []).append((p, t))
                seen += 1
            elif section == "players":
                players[int(tokens[0])] = Player[tokens[1].upper()]
            elif section == "statelabels":
                state_labels[int(tokens[0])] = " ".join(tokens[1:])
            else:
                action_labels[(int(tokens[0]), int(tokens[1]))] = " ".join(tokens[2:])
        except (ValueError, KeyError, IndexError):
            raise ModelError([f"line {lineno}: malformed {section} entry {line.strip()!r}"]) from None

    if seen != n_transitions:
        raise ModelError([f"header says {n_transitions} transitions, file has {seen}"])
    if kind == "sg":
        model: StochasticGame = StochasticGame()
    elif kind == "mdp":
        model = Mdp()
    else:
        model = MarkovChain()
    for s in range(n_states):
        payload = state_labels.get(s, s)
        model.add_state(payload, players.get(s, Player.BOX))
    for s in range(n_states):
        for a in sorted(transitions.get(s, {})):
            label = action_labels.get((s, a), a)
            model.add_action(s, label, transitions[s][a])
    model.initial = int(header["initial"])
    model.freeze()
    validate_model(model)
    return model
