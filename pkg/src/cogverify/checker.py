"""Numerical verification on explicit models.

Value iteration for (step-bounded) reachability and expected rewards on MDPs,
maxmin solving on stochastic games, qualitative precomputation, scheduler
extraction, Monte Carlo cross-validation and brute-force oracles for small
models. All Bellman sweeps are vectorised over the flat branch arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg
import scipy.stats

from ._util import parallel_map
from .model import (
    Direction,
    MarkovChain,
    Mdp,
    ModelError,
    Player,
    RewardFunction,
    Scheduler,
    StochasticGame,
    to_state_action_reward,
)

INF = float("inf")


@dataclass
class SolverConfig:
    """Convergence control: absolute sup-norm threshold between iterates."""

    epsilon: float = 1e-6
    max_iterations: int = 200_000

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class Verdict:
    """Per-state values plus the optimizing scheduler(s) and iteration count."""

    values: np.ndarray
    initial: int
    iterations: int
    converged: bool
    scheduler: Scheduler | None = None
    box_scheduler: Scheduler | None = None

    @property
    def value(self) -> float:
        return float(self.values[self.initial])

    def satisfies(self, op: str, bound: float) -> bool:
        v = self.value
        return {"<=": v <= bound, "<": v < bound, ">=": v >= bound, ">": v > bound}[op]


class BruteForceCapExceeded(ValueError):
    pass


def _require_validated(model: StochasticGame) -> None:
    if not model.frozen or not model.validated:
        raise ModelError(["model must pass validate_model before checking"])


def _target_bool(model: StochasticGame, targets: Iterable[int] | np.ndarray) -> np.ndarray:
    if isinstance(targets, np.ndarray) and targets.dtype == bool:
        if len(targets) != model.n_states:
            raise ModelError(["target mask length mismatch"])
        return targets
    mask = np.zeros(model.n_states, dtype=bool)
    idx = np.fromiter(targets, dtype=np.int64) if not isinstance(targets, np.ndarray) \
        else targets.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.n_states):
        raise ModelError(["target state index out of range"])
    mask[idx] = True
    return mask


# ---------------------------------------------------------------------------
# Qualitative precomputation (graph-based)


def backward_reachable(model: StochasticGame, targets: np.ndarray) -> np.ndarray:
    """States with at least one path into the target set."""
    n = model.n_states
    order = np.argsort(model.branch_targets, kind="stable")
    pred_src = model.branch_state[order]
    sorted_targets = model.branch_targets[order]
    starts = np.searchsorted(sorted_targets, np.arange(n, dtype=np.int64), side="left")
    ends = np.searchsorted(sorted_targets, np.arange(n, dtype=np.int64), side="right")

    visited = targets.copy()
    frontier = np.flatnonzero(targets)
    while frontier.size:
        lo, hi = starts[frontier], ends[frontier]
        lengths = hi - lo
        total = int(lengths.sum())
        if not total:
            break
        # Ragged gather of all predecessors of the frontier.
        idx = np.repeat(lo, lengths) + (
            np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        )
        preds = pred_src[idx]
        new = np.unique(preds[~visited[preds]])
        visited[new] = True
        frontier = new
    return visited


def _action_qualifies(model: StochasticGame, in_u: np.ndarray, in_v: np.ndarray) -> np.ndarray:
    """Per flat action: all successors in U and at least one in V."""
    all_u = np.bitwise_and.reduceat(in_u, model.branch_offsets[:-1])
    any_v = np.bitwise_or.reduceat(in_v, model.branch_offsets[:-1])
    return all_u & any_v


def _prob1_fixpoint(model: StochasticGame, targets: np.ndarray,
                    universal: bool) -> tuple[np.ndarray, np.ndarray]:
    """Greatest-fixpoint prob-1 set; universal=True quantifies over all actions.

    Returns (set, witness) where witness picks, for states in the set, an
    action staying in the set with progress towards the targets (only
    meaningful for the existential variant; it is a proper scheduler there).
    """
    n = model.n_states
    offsets = model.action_offsets[:-1]
    flat_idx = np.arange(model.n_actions, dtype=np.int64)
    u = np.ones(n, dtype=bool)
    witness = np.full(n, -1, dtype=np.int64)
    while True:
        v = targets.copy()
        witness[:] = -1
        changed = True
        while changed:
            in_u = u[model.branch_targets]
            in_v = v[model.branch_targets]
            ok = _action_qualifies(model, in_u, in_v)
            if universal:
                state_ok = np.bitwise_and.reduceat(ok, offsets)
            else:
                state_ok = np.bitwise_or.reduceat(ok, offsets)
            new = state_ok & ~v & ~targets
            changed = bool(new.any())
            if changed:
                first = np.minimum.reduceat(
                    np.where(ok, flat_idx, model.n_actions), offsets
                )
                witness[new] = first[new] - offsets[new]
                v |= new
        if np.array_equal(u, v):
            return u, witness
        u = v


def prob1_min(model: StochasticGame, targets: np.ndarray) -> np.ndarray:
    """States reaching the targets with probability 1 under all schedulers."""
    return _prob1_fixpoint(model, targets, universal=True)[0]


def prob1_max(model: StochasticGame, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """States with some scheduler reaching the targets almost surely.

    Also returns that witnessing scheduler's per-state choices.
    """
    return _prob1_fixpoint(model, targets, universal=False)


# ---------------------------------------------------------------------------
# Value iteration


def _state_opt(model: StochasticGame, q: np.ndarray, maximize: np.ndarray) -> np.ndarray:
    """Per-state optimum of per-action values; maximize is a per-state mask."""
    offsets = model.action_offsets[:-1]
    mx = np.maximum.reduceat(q, offsets)
    if maximize.all():
        return mx
    mn = np.minimum.reduceat(q, offsets)
    if not maximize.any():
        return mn
    return np.where(maximize, mx, mn)


def _action_values(model: StochasticGame, x: np.ndarray,
                   r_sa: np.ndarray | None = None) -> np.ndarray:
    contrib = model.branch_probs * x[model.branch_targets]
    q = np.add.reduceat(contrib, model.branch_offsets[:-1])
    if r_sa is not None:
        q = q + r_sa
    return q


def _extract_choices(model: StochasticGame, q: np.ndarray, opt: np.ndarray) -> np.ndarray:
    """Lowest action index achieving the per-state optimum (reproducible)."""
    offsets = model.action_offsets[:-1]
    candidate = q == opt[model.action_state]
    flat_idx = np.arange(model.n_actions, dtype=np.int64)
    first = np.minimum.reduceat(np.where(candidate, flat_idx, model.n_actions), offsets)
    return first - offsets


def _maximize_mask(model: StochasticGame, circle_dir: Direction,
                   box_dir: Direction) -> np.ndarray:
    circle = model.player_array == Player.CIRCLE.value
    out = np.empty(model.n_states, dtype=bool)
    out[circle] = circle_dir is Direction.MAX
    out[~circle] = box_dir is Direction.MAX
    return out


def _reach_iterate(model: StochasticGame, targets: np.ndarray, maximize: np.ndarray,
                   ones: np.ndarray, zeros: np.ndarray,
                   config: SolverConfig) -> tuple[np.ndarray, np.ndarray, int, bool]:
    x = np.zeros(model.n_states)
    x[targets | ones] = 1.0
    iterations = 0
    converged = False
    while iterations < config.max_iterations:
        q = _action_values(model, x)
        new = _state_opt(model, q, maximize)
        new[targets | ones] = 1.0
        new[zeros] = 0.0
        delta = float(np.max(np.abs(new - x))) if len(x) else 0.0
        x = new
        iterations += 1
        if delta < config.epsilon:
            converged = True
            break
    q = _action_values(model, x)
    return x, q, iterations, converged


def reach(model: Mdp, targets: Iterable[int] | np.ndarray, direction: Direction,
          config: SolverConfig | None = None) -> Verdict:
    """Optimal probability of eventually reaching the targets.

    Value iteration from zero with graph precomputation: under max, states
    with no path to the targets are exactly 0; under min, states reaching the
    targets almost surely under every scheduler are exactly 1.
    """
    _require_validated(model)
    config = config or SolverConfig()
    t = _target_bool(model, targets)
    n = model.n_states
    if direction is Direction.MAX:
        zeros = ~backward_reachable(model, t)
        ones = np.zeros(n, dtype=bool)
    else:
        zeros = np.zeros(n, dtype=bool)
        ones = prob1_min(model, t)
    maximize = np.full(n, direction is Direction.MAX)
    x, q, iterations, converged = _reach_iterate(model, t, maximize, ones, zeros, config)
    choices = _extract_choices(model, q, _state_opt(model, q, maximize))
    return Verdict(x, model.initial, iterations, converged, Scheduler(choices))


def bounded_reach(model: Mdp, targets: Iterable[int] | np.ndarray, steps: int,
                  direction: Direction, config: SolverConfig | None = None) -> Verdict:
    """Optimal probability of reaching the targets within a step bound."""
    _require_validated(model)
    if steps < 0:
        raise ValueError("step bound must be nonnegative")
    t = _target_bool(model, targets)
    maximize = np.full(model.n_states, direction is Direction.MAX)
    x = t.astype(float)
    for _ in range(steps):
        x = _state_opt(model, _action_values(model, x), maximize)
        x[t] = 1.0
    return Verdict(x, model.initial, steps, True)


def sg_value(game: StochasticGame, targets: Iterable[int] | np.ndarray,
             circle_dir: Direction, box_dir: Direction,
             config: SolverConfig | None = None) -> Verdict:
    """Reachability value when each player optimises its own direction."""
    _require_validated(game)
    config = config or SolverConfig()
    t = _target_bool(game, targets)
    maximize = _maximize_mask(game, circle_dir, box_dir)
    none = np.zeros(game.n_states, dtype=bool)
    x, q, iterations, converged = _reach_iterate(game, t, maximize, none, none, config)
    choices = _extract_choices(game, q, _state_opt(game, q, maximize))
    circle = Scheduler(
        np.where(game.player_array == Player.CIRCLE.value, choices, -1), Player.CIRCLE
    )
    box = Scheduler(
        np.where(game.player_array == Player.BOX.value, choices, -1), Player.BOX
    )
    return Verdict(x, game.initial, iterations, converged, circle, box)


def sg_maxmin_reach(game: StochasticGame, targets: Iterable[int] | np.ndarray,
                    config: SolverConfig | None = None) -> Verdict:
    """Robot-optimal reachability against worst-case human nondeterminism.

    The Circle scheduler of the verdict is the synthesised robot policy.
    """
    return sg_value(game, targets, Direction.MAX, Direction.MIN, config)


def bounded_sg_value(game: StochasticGame, targets: Iterable[int] | np.ndarray,
                     steps: int, circle_dir: Direction, box_dir: Direction) -> Verdict:
    """Step-bounded variant of sg_value."""
    _require_validated(game)
    t = _target_bool(game, targets)
    maximize = _maximize_mask(game, circle_dir, box_dir)
    x = t.astype(float)
    for _ in range(steps):
        x = _state_opt(game, _action_values(game, x), maximize)
        x[t] = 1.0
    return Verdict(x, game.initial, steps, True)


# ---------------------------------------------------------------------------
# Expected rewards


def _chain_expected_reward(model: StochasticGame, choices: np.ndarray,
                           r_sa: np.ndarray, targets: np.ndarray,
                           live: np.ndarray) -> np.ndarray:
    """Exact expected reward of the induced chain, solved linearly on `live`."""
    n = model.n_states
    flat = model.action_offsets[:-1] + choices
    solve_states = np.flatnonzero(live & ~targets)
    pos = np.full(n, -1, dtype=np.int64)
    pos[solve_states] = np.arange(len(solve_states))
    rows, cols, vals = [], [], []
    b = np.zeros(len(solve_states))
    for i, s in enumerate(solve_states):
        a = flat[s]
        b[i] += r_sa[a]
        for br in range(*model.branch_offsets[a:a + 2]):
            tgt = int(model.branch_targets[br])
            if targets[tgt]:
                continue
            rows.append(i)
            cols.append(pos[tgt])
            vals.append(model.branch_probs[br])
    m = len(solve_states)
    x = np.zeros(n)
    if m:
        mat = scipy.sparse.identity(m, format="csr") - scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(m, m)
        )
        x[solve_states] = scipy.sparse.linalg.spsolve(mat.tocsc(), b)
    return x


def expected_reward(model: Mdp, reward: RewardFunction,
                    targets: Iterable[int] | np.ndarray, direction: Direction,
                    config: SolverConfig | None = None) -> Verdict:
    """Optimal expected cumulative reward until first hitting the targets.

    Infinite where the qualifying reachability precondition fails: max needs
    probability 1 under every scheduler, min under some scheduler. Max
    iterates upward from zero; min iterates downward from an exact solve of a
    witnessing proper scheduler (zero-reward cycles make from-below unsound
    for min).
    """
    _require_validated(model)
    config = config or SolverConfig()
    t = _target_bool(model, targets)
    r_sa = to_state_action_reward(model, reward).values.astype(float)
    if np.any(~np.isfinite(r_sa)) or np.any(r_sa < 0):
        raise ModelError(["rewards must be finite and nonnegative"])
    n = model.n_states
    maximize = np.full(n, direction is Direction.MAX)

    if direction is Direction.MAX:
        finite = prob1_min(model, t)
        x = np.zeros(n)
    else:
        finite, witness = prob1_max(model, t)
        witness = np.where(witness >= 0, witness, 0)
        x = _chain_expected_reward(model, witness, r_sa, t, finite)
    x[~finite] = INF
    x[t] = 0.0

    iterations = 0
    converged = False
    finite_free = finite & ~t
    while iterations < config.max_iterations:
        q = _action_values(model, x, r_sa)
        new = _state_opt(model, q, maximize)
        new[t] = 0.0
        new[~finite] = INF
        delta = float(np.max(np.abs(new[finite_free] - x[finite_free]))) \
            if finite_free.any() else 0.0
        x = new
        iterations += 1
        if delta < config.epsilon:
            converged = True
            break
    q = _action_values(model, x, r_sa)
    with np.errstate(invalid="ignore"):
        opt = _state_opt(model, q, maximize)
        choices = _extract_choices(model, q, opt)
    choices[~finite] = 0
    return Verdict(x, model.initial, iterations, converged, Scheduler(choices))


# ---------------------------------------------------------------------------
# Brute-force oracles (exact optimisation over memoryless deterministic
# schedulers; chains are solved exactly)


def _nondet_states(model: StochasticGame) -> np.ndarray:
    return np.flatnonzero(np.diff(model.action_offsets) > 1)


def _scheduler_space(model: StochasticGame, states: np.ndarray, cap: int) -> int:
    total = 1
    for s in states:
        total *= model.action_count(int(s))
        if total > cap:
            raise BruteForceCapExceeded(
                f"scheduler combinations exceed cap {cap}"
            )
    return total


def _chain_arrays(model: StochasticGame, choices: np.ndarray):
    flat = model.action_offsets[:-1] + choices
    lo = model.branch_offsets[flat]
    hi = model.branch_offsets[flat + 1]
    lengths = hi - lo
    total = int(lengths.sum())
    idx = np.repeat(lo, lengths) + (
        np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    )
    src = np.repeat(np.arange(model.n_states, dtype=np.int64), lengths)
    return src, model.branch_targets[idx], model.branch_probs[idx], flat


def _chain_reach_values(model: StochasticGame, choices: np.ndarray,
                        targets: np.ndarray) -> np.ndarray:
    src, tgt, prob, _ = _chain_arrays(model, choices)
    n = model.n_states
    p = scipy.sparse.csr_matrix((prob, (src, tgt)), shape=(n, n))
    reachable = _csr_backward_reachable(p, targets)
    solve_states = np.flatnonzero(reachable & ~targets)
    x = np.zeros(n)
    x[targets] = 1.0
    if solve_states.size:
        sub = p[solve_states][:, solve_states]
        b = np.asarray(p[solve_states][:, targets].sum(axis=1)).ravel()
        mat = scipy.sparse.identity(len(solve_states), format="csc") - sub
        x[solve_states] = scipy.sparse.linalg.spsolve(mat, b)
    return x


def _csr_backward_reachable(p: scipy.sparse.csr_matrix, targets: np.ndarray) -> np.ndarray:
    pt = p.transpose().tocsr()
    visited = targets.copy()
    frontier = np.flatnonzero(targets)
    while frontier.size:
        preds = pt[frontier].nonzero()[1]
        new = np.unique(preds[~visited[preds]])
        visited[new] = True
        frontier = new
    return visited


def _chain_as_reaching(p: scipy.sparse.csr_matrix, targets: np.ndarray) -> np.ndarray:
    """States from which the chain hits the targets almost surely."""
    n = p.shape[0]
    # Positive-probability avoidance means reaching, inside the non-target
    # subgraph, a bottom SCC of the full chain that misses the targets.
    n_comp, comp = scipy.sparse.csgraph.connected_components(
        p, directed=True, connection="strong"
    )
    src, tgt = p.nonzero()
    leaves = np.zeros(n_comp, dtype=bool)
    cross = comp[src] != comp[tgt]
    leaves[comp[src[cross]]] = True
    has_target = np.zeros(n_comp, dtype=bool)
    has_target[comp[targets]] = True
    avoid_bscc = np.zeros(n, dtype=bool)
    avoid_bscc[~leaves[comp] & ~has_target[comp]] = True
    # Backward reachability of those BSCCs through non-target states.
    keep = ~targets
    sub_src, sub_tgt = src[keep[src] & keep[tgt]], tgt[keep[src] & keep[tgt]]
    sub = scipy.sparse.csr_matrix(
        (np.ones(len(sub_src), dtype=np.int8), (sub_src, sub_tgt)), shape=(n, n)
    )
    can_avoid = _csr_backward_reachable(sub, avoid_bscc & ~targets)
    return ~can_avoid


def _chain_expected_values(model: StochasticGame, choices: np.ndarray,
                           r_sa: np.ndarray, targets: np.ndarray) -> np.ndarray:
    src, tgt, prob, flat = _chain_arrays(model, choices)
    n = model.n_states
    p = scipy.sparse.csr_matrix((prob, (src, tgt)), shape=(n, n))
    almost_sure = _chain_as_reaching(p, targets)
    x = np.full(n, INF)
    x[targets] = 0.0
    solve_states = np.flatnonzero(almost_sure & ~targets)
    if solve_states.size:
        sub = p[solve_states][:, solve_states]
        mat = scipy.sparse.identity(len(solve_states), format="csc") - sub
        b = r_sa[flat[solve_states]]
        x[solve_states] = scipy.sparse.linalg.spsolve(mat, b)
    return x


def _enumerate_choices(model: StochasticGame, states: np.ndarray):
    base = np.zeros(model.n_states, dtype=np.int64)
    if states.size == 0:
        yield base
        return
    counts = [model.action_count(int(s)) for s in states]
    for combo in itertools.product(*(range(c) for c in counts)):
        choices = base.copy()
        choices[states] = combo
        yield choices


def brute_force_reach(model: Mdp, targets: Iterable[int] | np.ndarray,
                      cap: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) per-state reach probabilities over all memoryless
    deterministic schedulers; exact linear solves per induced chain."""
    _require_validated(model)
    t = _target_bool(model, targets)
    nondet = _nondet_states(model)
    _scheduler_space(model, nondet, cap)
    lo = np.full(model.n_states, np.inf)
    hi = np.full(model.n_states, -np.inf)
    for choices in _enumerate_choices(model, nondet):
        vals = _chain_reach_values(model, choices, t)
        np.minimum(lo, vals, out=lo)
        np.maximum(hi, vals, out=hi)
    return lo, hi


def brute_force_expected(model: Mdp, reward: RewardFunction,
                         targets: Iterable[int] | np.ndarray,
                         cap: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) per-state expected rewards; infinite when a scheduler's
    chain misses the targets with positive probability."""
    _require_validated(model)
    t = _target_bool(model, targets)
    r_sa = to_state_action_reward(model, reward).values.astype(float)
    nondet = _nondet_states(model)
    _scheduler_space(model, nondet, cap)
    lo = np.full(model.n_states, np.inf)
    hi = np.full(model.n_states, -np.inf)
    for choices in _enumerate_choices(model, nondet):
        vals = _chain_expected_values(model, choices, r_sa, t)
        np.minimum(lo, vals, out=lo)
        np.maximum(hi, vals, out=hi)
    return lo, hi


def brute_force_sg_reach(game: StochasticGame, targets: Iterable[int] | np.ndarray,
                         cap: int = 1_000_000) -> np.ndarray:
    """Per-state maxmin reach value by exhaustive two-player enumeration."""
    _require_validated(game)
    t = _target_bool(game, targets)
    circle = game.player_array == Player.CIRCLE.value
    nondet = _nondet_states(game)
    circle_nd = nondet[circle[nondet]]
    box_nd = nondet[~circle[nondet]]
    space_c = _scheduler_space(game, circle_nd, cap)
    space_b = _scheduler_space(game, box_nd, cap)
    if space_c * space_b > cap:
        raise BruteForceCapExceeded(
            f"scheduler pair combinations exceed cap {cap}"
        )
    best = np.full(game.n_states, -np.inf)
    for c_choices in _enumerate_choices(game, circle_nd):
        worst = np.full(game.n_states, np.inf)
        for b_choices in _enumerate_choices(game, box_nd):
            choices = c_choices.copy()
            choices[box_nd] = b_choices[box_nd]
            vals = _chain_reach_values(game, choices, t)
            np.minimum(worst, vals, out=worst)
        np.maximum(best, worst, out=best)
    return best


def brute_force_bounded(model: Mdp, targets: Iterable[int] | np.ndarray,
                        steps: int, direction: Direction) -> np.ndarray:
    """Step-bounded optimum by exact backward recursion in rational arithmetic.

    Independent of the float sweeps in bounded_reach: level-by-level dynamic
    programming over Fractions (floats convert exactly).
    """
    _require_validated(model)
    t = _target_bool(model, targets)
    pick = max if direction is Direction.MAX else min
    level = [Fraction(1) if t[s] else Fraction(0) for s in range(model.n_states)]
    probs = [Fraction(p) for p in model.branch_probs]
    for _ in range(steps):
        nxt = []
        for s in range(model.n_states):
            if t[s]:
                nxt.append(Fraction(1))
                continue
            best = None
            for a in range(*model.action_offsets[s:s + 2]):
                total = Fraction(0)
                for b in range(*model.branch_offsets[a:a + 2]):
                    total += probs[b] * level[int(model.branch_targets[b])]
                best = total if best is None else pick(best, total)
            nxt.append(best)
        level = nxt
    return np.array([float(v) for v in level])


# ---------------------------------------------------------------------------
# Monte Carlo simulation


@dataclass
class McEstimate:
    """Empirical reach frequency with a Wilson score interval."""

    hits: int
    samples: int
    horizon: int
    seed: int
    confidence: float = 0.99
    interval: tuple[float, float] = field(default=(0.0, 1.0))

    @property
    def estimate(self) -> float:
        return self.hits / self.samples


def wilson_interval(hits: int, samples: int, confidence: float = 0.99) -> tuple[float, float]:
    z = float(scipy.stats.norm.ppf(0.5 + confidence / 2.0))
    phat = hits / samples
    denom = 1.0 + z * z / samples
    centre = (phat + z * z / (2 * samples)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / samples + z * z / (4 * samples * samples))
    return (max(0.0, centre - half), min(1.0, centre + half))


_SHARD_SIZE = 8192


def monte_carlo(chain: MarkovChain, targets: Iterable[int] | np.ndarray,
                samples: int, horizon: int, seed: int = 0) -> McEstimate:
    """Fraction of sampled paths hitting the targets within the horizon.

    Sharded with per-shard seeds derived from the given seed, so the result
    is reproducible and independent of the worker count.
    """
    _require_validated(chain)
    if samples < 1 or horizon < 0:
        raise ValueError("samples must be >= 1 and horizon >= 0")
    t = _target_bool(chain, targets)
    n = chain.n_states
    # Per-state cumulative branch probabilities padded to a rectangle.
    counts = np.diff(chain.branch_offsets)
    width = int(counts.max()) if len(counts) else 1
    cum = np.ones((n, width))
    tgt = np.zeros((n, width), dtype=np.int64)
    for s in range(n):
        lo, hi = chain.branch_offsets[s], chain.branch_offsets[s + 1]
        probs = np.cumsum(chain.branch_probs[lo:hi])
        cum[s, : hi - lo] = probs
        cum[s, hi - lo:] = 2.0  # never selected
        tgt[s, : hi - lo] = chain.branch_targets[lo:hi]
        tgt[s, hi - lo:] = chain.branch_targets[hi - 1] if hi > lo else s
    cum[:, -1] = np.where(counts > 0, cum[:, -1], 2.0)

    shards = [(i, min(_SHARD_SIZE, samples - i)) for i in range(0, samples, _SHARD_SIZE)]
    seeds = np.random.SeedSequence(seed).spawn(len(shards))

    def run(shard) -> int:
        (offset, count), seq = shard
        rng = np.random.default_rng(seq)
        state = np.full(count, chain.initial, dtype=np.int64)
        hit = np.full(count, bool(t[chain.initial]))
        for _ in range(horizon):
            if hit.all():
                break
            u = rng.random(count)
            row = cum[state]
            pick = (u[:, None] > row).sum(axis=1)
            state = tgt[state, pick]
            hit |= t[state]
        return int(hit.sum())

    hits = sum(parallel_map(run, list(zip(shards, seeds))))
    estimate = McEstimate(hits, samples, horizon, seed)
    estimate.interval = wilson_interval(hits, samples, estimate.confidence)
    return estimate


# ---------------------------------------------------------------------------
# Temperature sweep


@dataclass(frozen=True)
class SweepRow:
    temperature: float
    steps: int | None  # None means unbounded
    p_min: float
    p_max: float


def temperature_sweep(spec, qtables, target_label: str,
                      temperatures: Sequence[float],
                      step_bounds: Sequence[int | None] = (None,),
                      config: SolverConfig | None = None,
                      variant: str = "underspec") -> list[SweepRow]:
    """Rebuild the human MDP per temperature and tabulate Pmin/Pmax.

    Plot-ready rows for reproducing goal-reachability-vs-temperature curves;
    no monotonicity in the temperature is asserted anywhere.
    """
    from . import builder

    rows = []
    for tau in temperatures:
        mdp = builder.build_human_model(spec.with_temperature(tau), qtables, variant)
        t = builder.target_states(mdp, target_label)
        for k in step_bounds:
            if k is None:
                lo = reach(mdp, t, Direction.MIN, config).value
                hi = reach(mdp, t, Direction.MAX, config).value
            else:
                lo = bounded_reach(mdp, t, k, Direction.MIN, config).value
                hi = bounded_reach(mdp, t, k, Direction.MAX, config).value
            rows.append(SweepRow(tau, k, lo, hi))
    return rows
