"""Planar simple random walk: simulation, exact bridges and range statistics.

Logarithms are natural throughout and balls are L1 balls with ``<=`` radius
comparisons.  Index ranges such as ``1 <= k <= (ln n)^{3/4}`` are truncated with
floor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _hashset as hs
from ._moves import DX, DY, U_MASK, codes_from_steps, moves_from_stream
from .rng import STREAM_2D, nb_popcount, nb_uniform, nb_word, trial_indices, trial_key, trial_keys
from .stats import Proportion

DEFAULT_RHO = 0.1
DEFAULT_EPSILON = 0.02


@dataclass(frozen=True)
class Path2:
    points: np.ndarray  # (n+1, 2) int64, starts at the origin
    is_bridge: bool = False

    @property
    def n(self) -> int:
        return len(self.points) - 1

    @property
    def codes(self) -> np.ndarray:
        d = np.diff(self.points, axis=0)
        return codes_from_steps(d[:, 0], d[:, 1])


def path_from_codes(codes: np.ndarray, is_bridge: bool = False) -> Path2:
    pts = np.zeros((len(codes) + 1, 2), dtype=np.int64)
    np.cumsum(DX[codes], out=pts[1:, 0])
    np.cumsum(DY[codes], out=pts[1:, 1])
    return Path2(pts, is_bridge)


@njit(nogil=True, cache=True)
def _shuffled_signs(key, n, ctr0):
    """Uniform arrangement of n/2 ones and n/2 zeros (Fisher-Yates)."""
    a = np.zeros(n, dtype=np.uint8)
    a[: n // 2] = 1
    c = ctr0
    for i in range(n - 1, 0, -1):
        j = np.int64(nb_uniform(key, c) * (i + 1))
        c += 1
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp
    return a


@njit(nogil=True, cache=True)
def bridge_codes(key, n):
    u = _shuffled_signs(key, n, 0)
    v = _shuffled_signs(key, n, n)
    return u | (v << np.uint8(1))


def _check_n(n):
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")


def simulate(n: int, seed: int, trial: int = 0) -> Path2:
    """``n`` i.i.d. uniform unit steps from the origin."""
    _check_n(n)
    return path_from_codes(moves_from_stream(trial_key(seed, trial, STREAM_2D), n))


def sample_bridge(n: int, seed: int, trial: int = 0) -> Path2:
    """Exact sample of the walk conditioned on ``U_n = 0``.

    In rotated coordinates ``x + y`` and ``x - y`` are independent +-1 walks, and
    ``U_n = 0`` means both return to zero, so each is a uniformly shuffled
    sequence of ``n/2`` up-steps and ``n/2`` down-steps.
    """
    _check_n(n)
    if n % 2:
        raise ValueError(f"bridge length must be even, got {n}")
    return path_from_codes(bridge_codes(trial_key(seed, trial, STREAM_2D), n), is_bridge=True)


def return_probability_exact(n: int) -> float:
    """P(U_n = 0) = (C(n, n/2) 2^-n)^2, computed in exact integer arithmetic."""
    if n % 2:
        return 0.0
    return float((math.comb(n, n // 2) ** 2) / (4**n))


@njit(nogil=True, cache=True)
def _endpoint_zero_hits(keys, n):
    hits = 0
    full = n >> 5
    rest = n & 31
    tail_mask = (np.uint64(1) << np.uint64(2 * rest)) - np.uint64(1)
    for i in range(keys.shape[0]):
        ups = 0
        vps = 0
        for w in range(full):
            word = nb_word(keys[i], w)
            ups += nb_popcount(word & U_MASK)
            vps += nb_popcount(word & ~U_MASK)
        if rest:
            word = nb_word(keys[i], full) & tail_mask
            ups += nb_popcount(word & U_MASK)
            vps += nb_popcount(word & ~U_MASK)
        if 2 * ups == n and 2 * vps == n:
            hits += 1
    return hits


def endpoint_zero_count(n: int, trials, seed: int, chunk: int = 1 << 20) -> int:
    """Number of trials whose ``simulate(n, seed, trial)`` path ends at the origin.

    Reads the same stream bits as ``simulate`` but only counts rotated up-steps.
    ``trials`` is a count or an array of trial indices.
    """
    idx = trial_indices(trials)
    hits = 0
    for start in range(0, len(idx), chunk):
        keys = trial_keys(seed, idx[start:start + chunk], STREAM_2D)
        hits += _endpoint_zero_hits(keys, n)
    return hits


@njit(nogil=True, cache=True)
def _first_visits(xs, ys, table):
    """Distinct sites in order of first visit, with their first-visit times."""
    n1 = xs.shape[0]
    times = np.empty(n1, dtype=np.int64)
    idx = np.empty(n1, dtype=np.int64)
    m = 0
    for t in range(n1):
        if hs.insert(table, hs.pack2(xs[t], ys[t])):
            times[m] = t
            idx[m] = t
            m += 1
    return times[:m], idx[:m]


@dataclass(frozen=True)
class RangeProfile:
    """First-visit times and L1 norms of the distinct sites of a path."""

    first_time: np.ndarray
    norm: np.ndarray

    @classmethod
    def of(cls, path: Path2) -> "RangeProfile":
        pts = path.points
        if np.abs(pts).max(initial=0) >= hs.COORD_LIMIT:
            raise hs.ResourceLimitError("path left the packable coordinate range")
        table = hs.new_table(len(pts))
        times, idx = _first_visits(pts[:, 0], pts[:, 1], table)
        norm = np.abs(pts[idx, 0]) + np.abs(pts[idx, 1])
        return cls(times, norm)

    def range_at(self, t) -> np.ndarray | int:
        return np.searchsorted(self.first_time, t, side="right")

    def ball_count(self, t: int, r: float) -> int:
        return int(np.count_nonzero((self.first_time <= t) & (self.norm <= r)))


def _check_t(path: Path2, t: int):
    if not 0 <= t <= path.n:
        raise ValueError(f"t={t} outside [0, {path.n}]")


def range2(path: Path2, t: int) -> int:
    """r_U(t): number of distinct points among U_0..U_t."""
    _check_t(path, t)
    pts = path.points[: t + 1]
    return len(np.unique(pts[:, 0] * (1 << 22) + pts[:, 1]))


def ball_range(path: Path2, t: int, r: float) -> int:
    """Number of distinct points among U_0..U_t in the L1 ball of radius r."""
    _check_t(path, t)
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    pts = path.points[: t + 1]
    inside = pts[np.abs(pts[:, 0]) + np.abs(pts[:, 1]) <= r]
    return len(np.unique(inside[:, 0] * (1 << 22) + inside[:, 1]))


@dataclass(frozen=True)
class Ladder:
    """Times ``t_k = n - floor(n / 2^k)``; ``times[k]`` for ``1 <= k <= k_max + 1``.

    ``k_max`` is the largest k with ``2^k < n``; ``times[0]`` is 0.
    """

    n: int
    times: np.ndarray

    @classmethod
    def of(cls, n: int) -> "Ladder":
        if n < 2:
            raise ValueError(f"ladder needs n >= 2, got {n}")
        k_max = (n - 1).bit_length() - 1  # largest k with 2**k < n
        ks = np.arange(k_max + 2)
        return cls(n, n - (n >> ks))

    @property
    def k_max(self) -> int:
        return len(self.times) - 2

    def t(self, k: int) -> int:
        return int(self.times[k])

    def width(self, k: int) -> int:
        return int(self.times[k + 1] - self.times[k])


def log_index_max(n: int) -> int:
    """floor((ln n)^{3/4})."""
    return math.floor(math.log(n) ** 0.75)


def k_set(path: Path2, rho: float = DEFAULT_RHO, profile: RangeProfile | None = None) -> list[int]:
    """Indices k <= (ln n)^{3/4} whose ladder interval adds at least rho*width/ln n new sites."""
    if not path.is_bridge:
        raise ValueError("k_set is defined on bridges")
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    n = path.n
    lad = Ladder.of(n)
    prof = profile or RangeProfile.of(path)
    ks = np.arange(1, log_index_max(n) + 1)
    r = prof.range_at(lad.times[: ks[-1] + 2]) if len(ks) else np.zeros(0)
    inc = r[ks + 1] - r[ks]
    widths = lad.times[ks + 1] - lad.times[ks]
    return [int(k) for k in ks[inc >= rho * widths / math.log(n)]]


def event_Bk(path: Path2, k: int, epsilon: float = DEFAULT_EPSILON,
             profile: RangeProfile | None = None) -> bool:
    """Few sites of U_0..U_{t_k} lie in the ball of radius (ln n)^eps sqrt(n - t_k)."""
    if not epsilon < 1 / 48:
        raise ValueError(f"epsilon must be below 1/48, got {epsilon}")
    n = path.n
    lad = Ladder.of(n)
    if not 1 <= k <= lad.k_max:
        raise ValueError(f"k={k} outside [1, {lad.k_max}]")
    ln = math.log(n)
    tk = lad.t(k)
    radius = ln**epsilon * math.sqrt(n - tk)
    count = (profile or RangeProfile.of(path)).ball_count(tk, radius)
    return count <= lad.width(k) / ln ** (1 / 16 - 2 * epsilon)


def ball_visit_count(path: Path2) -> int:
    """Number of k <= (ln n)^{3/4} with U_{t_k} in the L1 ball of radius sqrt(n - t_k)."""
    if not path.is_bridge:
        raise ValueError("ball_visit_count is defined on bridges")
    n = path.n
    lad = Ladder.of(n)
    ks = np.arange(1, log_index_max(n) + 1)
    tk = lad.times[ks]
    pts = path.points[tk]
    return int(np.count_nonzero(np.abs(pts[:, 0]) + np.abs(pts[:, 1]) <= np.sqrt(n - tk)))


@dataclass(frozen=True)
class ExcursionDecomposition:
    """Excursions from the ball B(0, sqrt t) out of B(0, 2 sqrt t) up to time n.

    Excursion i (1-based) starts at ``entries[i-1]`` and ends at ``exits[i-1]``;
    the first starts at time 0.  An exit beyond the horizon is recorded as -1
    and that excursion's ``sizes`` entry counts the points up to time n.
    """

    t: float
    n: int
    entries: np.ndarray
    exits: np.ndarray
    sizes: np.ndarray

    @property
    def N(self) -> int:
        return len(self.entries)


def excursion_decompose(path: Path2, t: float, n: int | None = None) -> ExcursionDecomposition:
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    n = path.n if n is None else n
    _check_t(path, n)
    pts = path.points[: n + 1]
    norm = np.abs(pts[:, 0]) + np.abs(pts[:, 1])
    inner = np.flatnonzero(norm <= math.sqrt(t))
    outer = np.flatnonzero(norm > 2 * math.sqrt(t))
    entries, exits, sizes = [], [], []
    sigma = 0
    while True:
        entries.append(sigma)
        j = np.searchsorted(outer, sigma)
        if j == len(outer):
            exits.append(-1)
            end = n
        else:
            end = int(outer[j])
            exits.append(end)
        seg = pts[sigma: end + 1]
        sizes.append(len(np.unique(seg[:, 0] * (1 << 22) + seg[:, 1])))
        if exits[-1] < 0:
            break
        j = np.searchsorted(inner, end)
        if j == len(inner):
            break
        sigma = int(inner[j])
    return ExcursionDecomposition(t, n, np.array(entries), np.array(exits), np.array(sizes))


@dataclass(frozen=True)
class BridgeStats:
    """Per-bridge statistics for one n, arrays indexed by trial."""

    n: int
    k_count: np.ndarray
    ball_visits: np.ndarray
    all_Bk: np.ndarray
    excursions: np.ndarray  # N at t = n/16
    range_n: np.ndarray


def bridge_statistics(n: int, trials, seed: int, rho: float = DEFAULT_RHO,
                      epsilon: float = DEFAULT_EPSILON, with_excursions: bool = True,
                      workers: int = 1) -> BridgeStats:
    from .walk3d import map_trials

    def one(i):
        path = sample_bridge(n, seed, i)
        prof = RangeProfile.of(path)
        kc = len(k_set(path, rho, prof))
        bv = ball_visit_count(path)
        allb = all(event_Bk(path, k, epsilon, prof) for k in range(1, log_index_max(n) + 1))
        exc = excursion_decompose(path, n / 16).N if with_excursions else -1
        return kc, bv, allb, exc, int(prof.range_at(n))

    idx = trial_indices(trials)
    rows = np.array(map_trials(lambda j: one(int(idx[j])), len(idx), workers),
                    dtype=np.int64).reshape(len(idx), 5)
    return BridgeStats(n, rows[:, 0], rows[:, 1], rows[:, 2].astype(bool), rows[:, 3], rows[:, 4])


def range_ratio(n: int, trials: int, seed: int, workers: int = 1) -> np.ndarray:
    """r_U(n) ln(n) / (pi n) for independent unconditioned walks."""
    from .walk3d import map_trials

    def one(i):
        return RangeProfile.of(simulate(n, seed, i)).range_at(n)

    r = np.asarray(map_trials(one, trials, workers), dtype=float)
    return r * math.log(n) / (math.pi * n)


def k_set_sizes(n: int, trials, seed: int, rho: float = DEFAULT_RHO, workers: int = 1) -> np.ndarray:
    """#K for independent bridges of length n."""
    from .walk3d import map_trials

    idx = trial_indices(trials)
    return np.asarray(map_trials(lambda j: len(k_set(sample_bridge(n, seed, int(idx[j])), rho)),
                                 len(idx), workers), dtype=np.int64)


def k_set_threshold(n: int) -> float:
    """Cut-off 0.05 (ln n)^(3/4) for calling #K small."""
    return 0.05 * math.log(n) ** 0.75


def zero_return(n: int, trials, seed: int) -> Proportion:
    return Proportion(endpoint_zero_count(n, trials, seed), len(trial_indices(trials)))
