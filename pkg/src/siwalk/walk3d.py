"""The self-interacting walk on Z^3.

Under ``Rule.Z_FIRST`` the walk moves its Z coordinate by +-1 on the first visit
to a site and makes a planar simple-random-walk step of (X, Y) on every later
visit.  ``Rule.XY_FIRST`` swaps the two cases.  Z signs and planar moves come from
two independent per-trial streams, so the planar projection observed at the
times it moves is exactly the planar walk generated from the 2D stream.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _hashset as hs
from ._moves import DX, DY, moves_from_stream
from .rng import STREAM_2D, STREAM_Z, nb_word, trial_indices, trial_key, trial_keys
from .stats import Proportion

OK = 0
RANGE_EXCEEDED = 1


class Rule(enum.Enum):
    Z_FIRST = 0
    XY_FIRST = 1


@dataclass(frozen=True)
class WalkPath3:
    """A trajectory ``W_0..W_n``.

    ``fresh[t]`` tells whether ``W_t`` was visited for the first time at time
    ``t``; it decides which kind of step is taken from ``W_t``.
    ``range_counts[t]`` is the number of distinct sites among ``W_0..W_t``.
    """

    rule: Rule
    points: np.ndarray
    fresh: np.ndarray
    range_counts: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.points) - 1


@dataclass
class WalkState:
    """Mutable single-walk state for step-by-step simulation in pure Python."""

    rule: Rule = Rule.Z_FIRST
    position: tuple[int, int, int] = (0, 0, 0)
    visited: set = field(default_factory=set)
    t: int = 0

    @property
    def range_count(self) -> int:
        return len(self.visited)


_PLANAR = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))


def step(state: WalkState, rng: np.random.Generator) -> WalkState:
    """Advance ``state`` by one step in place and return it."""
    pos = state.position
    fresh = pos not in state.visited
    state.visited.add(pos)
    z_move = fresh if state.rule is Rule.Z_FIRST else not fresh
    if z_move:
        d = (0, 0, 1 if rng.integers(2) else -1)
    else:
        d = _PLANAR[rng.integers(4)]
    state.position = (pos[0] + d[0], pos[1] + d[1], pos[2] + d[2])
    state.t += 1
    return state


@njit(nogil=True, cache=True)
def _walk_path(rule, n, key_z, moves, table):
    points = np.empty((n + 1, 3), dtype=np.int64)
    fresh = np.empty(n + 1, dtype=np.bool_)
    x = 0
    y = 0
    z = 0
    nz = 0
    nm = 0
    zword = np.uint64(0)
    for t in range(n + 1):
        points[t, 0] = x
        points[t, 1] = y
        points[t, 2] = z
        f = hs.insert(table, hs.pack3(x, y, z))
        fresh[t] = f
        if t == n:
            break
        if f == (rule == 0):
            if (nz & 63) == 0:
                zword = nb_word(key_z, nz >> 6)
            z += 2 * np.int64((zword >> np.uint64(nz & 63)) & np.uint64(1)) - 1
            nz += 1
            if not hs.in_range(z):
                return points, fresh, RANGE_EXCEEDED
        else:
            c = moves[nm]
            nm += 1
            x += DX[c]
            y += DY[c]
            if not (hs.in_range(x) and hs.in_range(y)):
                return points, fresh, RANGE_EXCEEDED
    return points, fresh, OK


@njit(nogil=True, cache=True)
def _return_window(n, key_z, moves, table):
    """Walk ``2n`` Z_FIRST steps; visits to the origin during [n, 2n] and last visit."""
    x = 0
    y = 0
    z = 0
    nz = 0
    nm = 0
    zword = np.uint64(0)
    hits = 0
    last = 0
    for t in range(2 * n + 1):
        if x == 0 and y == 0 and z == 0:
            last = t
            if t >= n:
                hits += 1
        if t == 2 * n:
            break
        if hs.insert(table, hs.pack3(x, y, z)):
            if (nz & 63) == 0:
                zword = nb_word(key_z, nz >> 6)
            z += 2 * np.int64((zword >> np.uint64(nz & 63)) & np.uint64(1)) - 1
            nz += 1
            if not hs.in_range(z):
                return hits, last, RANGE_EXCEEDED
        else:
            c = moves[nm]
            nm += 1
            x += DX[c]
            y += DY[c]
            if not (hs.in_range(x) and hs.in_range(y)):
                return hits, last, RANGE_EXCEEDED
    return hits, last, OK


def _range_error():
    return hs.ResourceLimitError(
        f"walk left the packable coordinate range |c| < {hs.COORD_LIMIT}"
    )


def run_walk(rule: Rule, n: int, seed: int, trial: int = 0, mem_cap: int | None = None) -> WalkPath3:
    """Simulate ``n`` steps; deterministic in ``(rule, n, seed, trial)``."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rule = Rule(rule)
    table = hs.new_table(n + 1, mem_cap)
    moves = moves_from_stream(trial_key(seed, trial, STREAM_2D), n)
    points, fresh, status = _walk_path(rule.value, n, trial_key(seed, trial, STREAM_Z), moves, table)
    if status != OK:
        raise _range_error()
    return WalkPath3(rule, points, fresh, np.cumsum(fresh))


@dataclass(frozen=True)
class ReturnStats:
    visit_times: np.ndarray
    last_visit: int | None


def return_stats(path: WalkPath3, target=(0, 0, 0)) -> ReturnStats:
    """All times the path sits at ``target`` and the latest of them."""
    hit = np.all(path.points == np.asarray(target, dtype=np.int64), axis=1)
    times = np.flatnonzero(hit)
    return ReturnStats(times, int(times[-1]) if len(times) else None)


def map_trials(fn, trials: int, workers: int = 1):
    """Apply ``fn(i)`` to every trial index; results come back in trial order."""
    if workers <= 1:
        return [fn(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials)))


def return_window_counts(n: int, trials, seed: int, workers: int = 1,
                         mem_cap: int | None = None) -> np.ndarray:
    """Per-trial number of visits to the origin during walk times [n, 2n].

    ``trials`` is a count or an array of trial indices.
    """
    idx = trial_indices(trials)
    keys_z = trial_keys(seed, idx, STREAM_Z)
    keys_2d = trial_keys(seed, idx, STREAM_2D)
    hs.new_table(2 * n + 1, mem_cap, arrays=max(1, workers))  # cap check for all workers

    def one(j):
        table = hs.new_table(2 * n + 1, mem_cap)
        moves = moves_from_stream(keys_2d[j], 2 * n)
        hits, _, status = _return_window(n, keys_z[j], moves, table)
        if status != OK:
            raise _range_error()
        return hits

    return np.asarray(map_trials(one, len(idx), workers), dtype=np.int64)


def return_probability(n: int, trials: int, seed: int, workers: int = 1) -> Proportion:
    """Estimate P(W_t = 0 for some t in [n, 2n])."""
    hits = return_window_counts(n, trials, seed, workers)
    return Proportion(int(np.count_nonzero(hits)), trials)
