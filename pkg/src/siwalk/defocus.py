"""Box ladders, rectangle-crossing times and zero-probability estimates.

A path ending at 0 at time n must pass through every space-time rectangle
``[t_k, n] x [-h_k, h_k]`` of the box ladder.  The functions here measure, on
simulated ensembles, how often paths escape a box, how often they then run far
before coming back, and how fast P(M_n = 0) decays with n.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import STREAM_Z, nb_sum_signs, nb_uniform, nb_word, trial_generator, trial_indices, trial_keys
from .srw2d import Ladder
from .stats import Proportion, wilson_interval

NEVER = -1
MIN_BIN = 30


@dataclass(frozen=True)
class BoxLadder:
    n: int
    rho: float
    a: float
    times: np.ndarray  # t_k for k = 0..k_max+1 (index 0 unused)
    heights: np.ndarray  # h_k for k = 1..k_max at the same index (index 0 is nan)

    @property
    def k_max(self) -> int:
        return len(self.times) - 2

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    def h(self, k: int) -> float:
        return float(self.heights[k])

    def t(self, k: int) -> int:
        return int(self.times[k])

    def quad_threshold(self, k: int) -> float:
        """Minimal quadratic-variation gain over [t_k, t_{k+1}] (the A_k event)."""
        return self.rho * (self.t(k + 1) - self.t(k)) / self.log_n ** (2 * self.a)

    def upper_level(self, k: int) -> float:
        return self.h(k) * self.log_n**self.a / self.rho**2

    def lower_level(self, k: int) -> float:
        return self.h(k) / math.sqrt(2)


def box_ladder(n: int, rho: float = 0.1, a: float = 0.5) -> BoxLadder:
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    times = Ladder.of(n).times
    widths = np.diff(times).astype(float)
    heights = np.full(len(times) - 1, np.nan)
    heights[1:] = rho * np.sqrt(widths[1:] / math.log(n) ** (2 * a))
    return BoxLadder(n, rho, a, times, heights)


def _first_at_or_after(idx: np.ndarray, start: int) -> int:
    j = np.searchsorted(idx, start)
    return int(idx[j]) if j < len(idx) else NEVER


@dataclass(frozen=True)
class CrossingRecord:
    """Stopping times of one path against a ladder; ``NEVER`` past the horizon.

    Arrays are indexed by k (index 0 unused except ``s[0] = 0``).  ``m_at`` and
    ``v_at`` hold M and V at the ladder times ``t_0 .. t_{k_max+1}``.
    """

    n: int
    s: np.ndarray
    sigma: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    m_at: np.ndarray
    v_at: np.ndarray
    terminal: int

    def all_boxes_hit(self) -> bool:
        return bool(np.all(self.s[1:] != NEVER))


def crossing_record(values, ladder: BoxLadder, qvar=None, upper=None, lower=None) -> CrossingRecord:
    """Forward scan of ``values[0..n]``.

    ``qvar`` defaults to ``V_t = t`` (unit conditional variance).  ``upper`` and
    ``lower`` override the T_1 and T_2 levels with per-k arrays.
    """
    n = ladder.n
    values = np.asarray(values)
    if len(values) < n + 1:
        raise ValueError(f"path has {len(values) - 1} steps, ladder needs {n}")
    absm = np.abs(values[: n + 1])
    K = ladder.k_max
    s = np.full(K + 1, NEVER, dtype=np.int64)
    sigma = np.full(K + 1, NEVER, dtype=np.int64)
    T1 = np.full(K + 1, NEVER, dtype=np.int64)
    T2 = np.full(K + 1, NEVER, dtype=np.int64)
    s[0] = 0
    for k in range(1, K + 1):
        h = ladder.h(k)
        tk = ladder.t(k)
        if s[k - 1] != NEVER:
            s[k] = _first_at_or_after(np.flatnonzero(absm <= h), max(int(s[k - 1]), tk))
        sig = _first_at_or_after(np.flatnonzero(absm >= h), tk)
        sigma[k] = sig
        if sig == NEVER:
            continue
        up = ladder.upper_level(k) if upper is None else upper[k]
        lo = ladder.lower_level(k) if lower is None else lower[k]
        T1[k] = _first_at_or_after(np.flatnonzero(absm >= up), sig)
        T2[k] = _first_at_or_after(np.flatnonzero(absm <= lo), sig)
    times = ladder.times
    m_at = values[times]
    v_at = times.astype(float) if qvar is None else np.asarray(qvar, dtype=float)[times]
    return CrossingRecord(n, s, sigma, T1, T2, m_at, v_at, int(values[n]))


@dataclass(frozen=True)
class BinEstimate:
    label: str
    count: int
    trials: int
    flagged: bool

    @property
    def estimate(self) -> float | None:
        return self.count / self.trials if self.trials else None


@dataclass(frozen=True)
class EscapeEstimate:
    k: int
    count: int
    trials: int
    bins: list[BinEstimate] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return self.trials < MIN_BIN

    @property
    def estimate(self) -> float | None:
        return self.count / self.trials if self.trials else None

    @property
    def se(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else math.nan

    @property
    def interval(self):
        return wilson_interval(self.count, self.trials) if self.trials else (math.nan, math.nan)


def _Ak(records, ladder: BoxLadder, k: int) -> np.ndarray:
    thr = ladder.quad_threshold(k)
    return np.array([r.v_at[k + 1] - r.v_at[k] >= thr for r in records], dtype=bool)


def escape_stats(records, ladder: BoxLadder, k: int, condition_on_Ak: bool = True,
                 min_bin: int = MIN_BIN) -> EscapeEstimate:
    """Estimate P(sigma_k <= t_{k+1}) over paths satisfying A_k.

    Paths are also split into bins by |M_{t_k}| (below h_k, below 2 h_k, above)
    and by V_{t_k} against its median, a coarse stand-in for conditioning on the
    past at time t_k; bins with fewer than ``min_bin`` paths are flagged.
    """
    if not 1 <= k <= ladder.k_max:
        raise ValueError(f"k={k} outside [1, {ladder.k_max}]")
    keep = _Ak(records, ladder, k) if condition_on_Ak else np.ones(len(records), dtype=bool)
    sel = [r for r, ok in zip(records, keep) if ok]
    t_next = ladder.t(k + 1)
    hit = np.array([r.sigma[k] != NEVER and r.sigma[k] <= t_next for r in sel], dtype=bool)
    bins = []
    if sel:
        h = ladder.h(k)
        m = np.abs(np.array([r.m_at[k] for r in sel], dtype=float))
        v = np.array([r.v_at[k] for r in sel])
        mband = np.digitize(m, [h, 2 * h])
        vhigh = v > np.median(v)
        for mb, mlabel in enumerate(("|M|<h", "h<=|M|<2h", "|M|>=2h")):
            for vb, vlabel in ((False, "V<=med"), (True, "V>med")):
                mask = (mband == mb) & (vhigh == vb)
                c = int(mask.sum())
                bins.append(BinEstimate(f"{mlabel},{vlabel}", int(hit[mask].sum()), c, c < min_bin))
    return EscapeEstimate(k, int(hit.sum()), len(sel), bins)


@dataclass(frozen=True)
class T1T2Estimate:
    k: int
    count: int
    trials: int
    log_n: float
    a: float

    @property
    def flagged(self) -> bool:
        return self.trials < MIN_BIN

    @property
    def estimate(self) -> float | None:
        return self.count / self.trials if self.trials else None

    @property
    def scaled(self) -> float | None:
        """estimate * (ln n)^a, expected to stay of order one across n."""
        e = self.estimate
        return None if e is None else e * self.log_n**self.a

    @property
    def interval(self):
        return wilson_interval(self.count, self.trials) if self.trials else (math.nan, math.nan)


def t1t2_stats(records, ladder: BoxLadder, k: int) -> T1T2Estimate:
    """Estimate P(T_1 ^ n < T_2 | sigma_k <= n)."""
    sel = [r for r in records if r.sigma[k] != NEVER]
    wins = sum(1 for r in sel if r.T2[k] == NEVER or (r.T1[k] != NEVER and r.T1[k] < r.T2[k]))
    return T1T2Estimate(k, wins, len(sel), ladder.log_n, ladder.a)


# ---------------------------------------------------------------------------
# path families


def lazy_jump(n: int, a: float) -> int:
    """Jump size ceil((ln n)^a) of the lazy test family."""
    return math.ceil(math.log(n) ** a)


@njit(nogil=True, cache=True)
def _lazy_path(key, n, J):
    out = np.zeros(n + 1, dtype=np.int64)
    q = 1.0 / (J * J)
    m = 0
    for i in range(n):
        if nb_uniform(key, 2 * i) < q:
            m += J if (nb_word(key, 2 * i + 1) & np.uint64(1)) else -J
        out[i + 1] = m
    return out


def test_martingale_lazy(n: int, a: float, seed: int, trial: int = 0) -> np.ndarray:
    """Martingale whose steps are +-J with probability 1/J^2 each way combined, else 0.

    J = ceil((ln n)^a), so every conditional variance is exactly 1 and every
    increment is at most J.
    """
    if not 0 < a < 1:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    return _lazy_path(trial_keys(seed, [trial])[0], n, lazy_jump(n, a))


test_martingale_lazy.__test__ = False  # not a pytest test despite the name


@njit(nogil=True, cache=True)
def _srw_terminals(keys, n):
    out = np.empty(keys.shape[0], dtype=np.int64)
    for i in range(keys.shape[0]):
        out[i] = nb_sum_signs(keys[i], 0, n)[0]
    return out


@njit(nogil=True, cache=True)
def _srw_path(key, n):
    out = np.zeros(n + 1, dtype=np.int64)
    w = np.uint64(0)
    for i in range(n):
        if (i & 63) == 0:
            w = nb_word(key, i >> 6)
        out[i + 1] = out[i] + 2 * np.int64((w >> np.uint64(i & 63)) & np.uint64(1)) - 1
    return out


class ZeroFamily:
    """The constant path at 0."""

    def path(self, n, seed, trial=0):
        return np.zeros(n + 1, dtype=np.int64)

    def terminals(self, n, trials, seed):
        return np.zeros(len(trial_indices(trials)), dtype=np.int64)


class SimpleWalkFamily:
    """+-1 simple random walk; paths and terminals read the same stream bits."""

    def path(self, n, seed, trial=0):
        return _srw_path(trial_keys(seed, [trial], STREAM_Z)[0], n)

    def terminals(self, n, trials, seed):
        return _srw_terminals(trial_keys(seed, trial_indices(trials), STREAM_Z), n)


@dataclass(frozen=True)
class LazyFamily:
    """The lazy test family at exponent ``a``.

    ``terminals`` samples M_n from its exact law (a binomial number of jumps,
    then a binomial split into up and down jumps) instead of running n steps.
    """

    a: float = 0.5

    def path(self, n, seed, trial=0):
        return test_martingale_lazy(n, self.a, seed, trial)

    def terminals(self, n, trials, seed):
        J = lazy_jump(n, self.a)
        q = 1.0 / (J * J)
        idx = trial_indices(trials)
        out = np.empty(len(idx), dtype=np.int64)
        for j, i in enumerate(idx):
            g = trial_generator(seed, int(i))
            jumps = g.binomial(n, q)
            out[j] = J * (2 * g.binomial(jumps, 0.5) - jumps)
        return out


@dataclass(frozen=True)
class EmbeddedFamily:
    """Embedded martingale of the Z_FIRST walk, optionally with a bridged planar part."""

    bridge: bool = False

    def path(self, n, seed, trial=0):
        from .clock import simulate_martingale

        return simulate_martingale(n, seed, trial, bridge=self.bridge).values

    def terminals(self, n, trials, seed):
        return np.array([self.path(n, seed, int(i))[n] for i in trial_indices(trials)], dtype=np.int64)


@dataclass(frozen=True)
class ZeroProb:
    n: int
    count: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.count / self.trials

    @property
    def interval(self):
        return wilson_interval(self.count, self.trials)

    @property
    def proportion(self) -> Proportion:
        return Proportion(self.count, self.trials)


def zero_prob(family, n: int, trials, seed: int) -> ZeroProb:
    """Frequency of M_n = 0 over independent paths of ``family``.

    ``trials`` is a count or an explicit array of trial indices.
    """
    idx = trial_indices(trials)
    if len(idx) < 1:
        raise ValueError(f"trials must be at least 1, got {len(idx)}")
    term = np.asarray(family.terminals(n, idx, seed))
    return ZeroProb(n, int(np.count_nonzero(term == 0)), len(idx))


def lazy_zero_prob_exact(n: int, a: float) -> float:
    """P(M_n = 0) for the lazy family by summing over the number of jumps."""
    from scipy import stats

    J = lazy_jump(n, a)
    jumps = np.arange(0, n + 1, 2)
    return float(np.sum(stats.binom.pmf(jumps, n, 1.0 / J**2) * stats.binom.pmf(jumps // 2, jumps, 0.5)))


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    x: np.ndarray
    y: np.ndarray


def decay_fit(points) -> DecayFit:
    """Least-squares line of ln(-ln p) against ln ln n over ``(n, p)`` pairs."""
    pts = [(float(n), float(p)) for n, p in points]
    good = []
    for n, p in pts:
        if 0.0 < p < 1.0:
            good.append((n, p))
        else:
            warnings.warn(f"dropping point n={n:g} with p={p:g}: log undefined", stacklevel=2)
    if len(good) < 3:
        raise ValueError(f"need at least 3 usable points, got {len(good)}")
    x = np.log(np.log([n for n, _ in good]))
    y = np.log(-np.log([p for _, p in good]))
    if np.ptp(x) == 0:
        raise ValueError("all points share the same n; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    return DecayFit(float(slope), float(intercept), y - (slope * x + intercept), x, y)
