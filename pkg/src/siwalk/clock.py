"""Embedded martingale ``M_t = Z_{tau_t}`` of the Z_FIRST walk.

``tau_t`` is the walk time of the t-th planar move.  Between planar moves the
walk runs a Z-excursion inside one column, and the law of that excursion is a
function of the column geometry at the entry point only: whether the entry site
is already visited, and the distances to the nearest visited heights above and
below.  Those distances (``ColumnGaps``) therefore give the exact conditional
moments of each increment, and the quadratic variation ``V_t`` is their running
sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _hashset as hs
from ._moves import DX, DY, moves_from_stream
from .rng import STREAM_2D, STREAM_Z, nb_word, trial_key
from .srw2d import bridge_codes
from .stats import wilson_interval
from .walk3d import Rule, WalkPath3

GAP_CAP = 60
INF = math.inf
_SERIES_DEPTH = 400


@dataclass(frozen=True)
class ColumnGaps:
    g_plus: float = INF
    g_minus: float = INF
    entry_visited: bool = False

    def __post_init__(self):
        for g in (self.g_plus, self.g_minus):
            if not (g == INF or (g >= 1 and float(g).is_integer())):
                raise ValueError(f"gaps must be positive integers or inf, got {g}")


def _side_law(g):
    """(displacement, probability) pairs for an excursion started upwards with gap g."""
    if g > GAP_CAP:
        g = INF
    out = []
    j = 1
    while j < g and j <= _SERIES_DEPTH:
        out.append((j - 1, 0.5**j))  # reverses after j fresh steps
        j += 1
    if g != INF:
        out.append((g, 0.5 ** (g - 1)))  # runs into the visited site
    return out


def column_increment_moments(gaps: ColumnGaps) -> tuple[float, float]:
    """Exact (mean, second moment) of the next martingale increment."""
    if gaps.entry_visited:
        return 0.0, 0.0
    up = _side_law(gaps.g_plus)
    down = _side_law(gaps.g_minus)
    mean = 0.5 * math.fsum(d * p for d, p in up) - 0.5 * math.fsum(d * p for d, p in down)
    m2 = 0.5 * math.fsum(d * d * p for d, p in up) + 0.5 * math.fsum(d * d * p for d, p in down)
    return mean, m2


def _gap_value(code: int) -> float:
    return INF if code == 0 else float(code)


def moment_table() -> np.ndarray:
    """Second moments indexed by gap codes (0 = infinite, 1..GAP_CAP finite)."""
    tab = np.empty((GAP_CAP + 1, GAP_CAP + 1))
    for i in range(GAP_CAP + 1):
        for j in range(GAP_CAP + 1):
            tab[i, j] = column_increment_moments(ColumnGaps(_gap_value(i), _gap_value(j)))[1]
    return tab


_M2_TABLE = moment_table()


@dataclass(frozen=True)
class MartingalePath:
    """Embedded martingale with per-increment column geometry.

    Arrays ``values`` and ``clock_times`` have length T+1; the per-increment
    arrays have length T, entry ``l`` describing ``M_{l+1} - M_l`` as seen at
    clock time ``tau_l``.  Gap codes use 0 for an infinite gap.
    """

    values: np.ndarray
    clock_times: np.ndarray
    fresh2d: np.ndarray
    entry_visited: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    cond_m2: np.ndarray

    @property
    def T(self) -> int:
        return len(self.values) - 1

    @property
    def cond_mean(self) -> np.ndarray:
        return np.zeros(self.T)

    @property
    def qvar(self) -> np.ndarray:
        return quadratic_variation(self)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def gaps(self, ell: int) -> ColumnGaps:
        return ColumnGaps(_gap_value(int(self.g_plus[ell])), _gap_value(int(self.g_minus[ell])),
                          bool(self.entry_visited[ell]))


def quadratic_variation(mpath: MartingalePath) -> np.ndarray:
    """V_0 = 0 and V_t = sum of the first t conditional second moments."""
    v = np.zeros(mpath.T + 1)
    np.cumsum(mpath.cond_m2, out=v[1:])
    return v


@njit(inline="always", nogil=True, cache=True)
def _note_site(colkeys, colmin, colmax, x, y, z):
    s = hs.find_slot(colkeys, hs.pack2(x, y))
    if colkeys[s] == hs.EMPTY:
        colkeys[s] = hs.pack2(x, y)
        colmin[s] = z
        colmax[s] = z
    else:
        if z < colmin[s]:
            colmin[s] = z
        if z > colmax[s]:
            colmax[s] = z


@njit(inline="always", nogil=True, cache=True)
def _gaps_in_column(table, lo, hi, x, y, z, cap):
    """Gap codes (0 = infinite) above and below a fresh entry in a touched column."""
    up = 0
    if z < hi:
        for j in range(1, min(cap, hi - z) + 1):
            if hs.contains(table, hs.pack3(x, y, z + j)):
                up = j
                break
    down = 0
    if z > lo:
        for j in range(1, min(cap, z - lo) + 1):
            if hs.contains(table, hs.pack3(x, y, z - j)):
                down = j
                break
    return up, down


@njit(inline="always", nogil=True, cache=True)
def _column_gaps(table, colkeys, colmin, colmax, x, y, z, cap):
    """(fresh2d, entry_visited, gap_up, gap_down) with 0 encoding an infinite gap."""
    s = hs.find_slot(colkeys, hs.pack2(x, y))
    if colkeys[s] == hs.EMPTY:
        return True, False, 0, 0
    if hs.contains(table, hs.pack3(x, y, z)):
        return False, True, 0, 0
    up, down = _gaps_in_column(table, colmin[s], colmax[s], x, y, z, cap)
    return False, False, up, down


OK = 0
RANGE_EXCEEDED = 1
TABLE_FULL = 2


@njit(nogil=True, cache=True)
def _run_clock(T, key_z, moves, table, colkeys, colmin, colmax, m2tab, cap):
    values = np.empty(T + 1, dtype=np.int64)
    ctimes = np.empty(T + 1, dtype=np.int64)
    fresh2d = np.empty(T, dtype=np.bool_)
    ev = np.empty(T, dtype=np.bool_)
    gp = np.empty(T, dtype=np.int16)
    gm = np.empty(T, dtype=np.int16)
    m2 = np.empty(T, dtype=np.float64)
    limit = table.shape[0] // 2
    used = 0
    x = 0
    y = 0
    z = 0
    t = 0
    nz = 0
    zword = np.uint64(0)
    for ell in range(T):
        values[ell] = z
        ctimes[ell] = t
        # the excursion stays in this column, so its slot is reused for the update
        ck = hs.pack2(x, y)
        s = hs.find_slot(colkeys, ck)
        a = 0
        b = 0
        e = False
        f2 = colkeys[s] == hs.EMPTY
        if not f2:
            e = hs.contains(table, hs.pack3(x, y, z))
            if not e:
                a, b = _gaps_in_column(table, colmin[s], colmax[s], x, y, z, cap)
        fresh2d[ell] = f2
        ev[ell] = e
        gp[ell] = a
        gm[ell] = b
        m2[ell] = 0.0 if e else m2tab[a, b]
        lo = z
        hi = z
        while hs.insert(table, hs.pack3(x, y, z)):
            used += 1
            if used > limit:
                return values, ctimes, fresh2d, ev, gp, gm, m2, TABLE_FULL
            if z < lo:
                lo = z
            if z > hi:
                hi = z
            if (nz & 63) == 0:
                zword = nb_word(key_z, nz >> 6)
            z += 2 * np.int64((zword >> np.uint64(nz & 63)) & np.uint64(1)) - 1
            nz += 1
            t += 1
            if not hs.in_range(z):
                return values, ctimes, fresh2d, ev, gp, gm, m2, RANGE_EXCEEDED
        if not e:
            if f2:
                colkeys[s] = ck
                colmin[s] = lo
                colmax[s] = hi
            else:
                colmin[s] = min(colmin[s], lo)
                colmax[s] = max(colmax[s], hi)
        c = moves[ell]
        x += DX[c]
        y += DY[c]
        t += 1
        if not (hs.in_range(x) and hs.in_range(y)):
            return values, ctimes, fresh2d, ev, gp, gm, m2, RANGE_EXCEEDED
    values[T] = z
    ctimes[T] = t
    return values, ctimes, fresh2d, ev, gp, gm, m2, OK


@njit(nogil=True, cache=True)
def _replay(points, table, colkeys, colmin, colmax, m2tab, cap):
    n1 = points.shape[0]
    T = 0
    for t in range(1, n1):
        if points[t, 0] != points[t - 1, 0] or points[t, 1] != points[t - 1, 1]:
            T += 1
    values = np.empty(T + 1, dtype=np.int64)
    ctimes = np.empty(T + 1, dtype=np.int64)
    fresh2d = np.empty(T, dtype=np.bool_)
    ev = np.empty(T, dtype=np.bool_)
    gp = np.empty(T, dtype=np.int16)
    gm = np.empty(T, dtype=np.int16)
    m2 = np.empty(T, dtype=np.float64)
    ell = 0
    for t in range(n1):
        x = points[t, 0]
        y = points[t, 1]
        z = points[t, 2]
        if t == 0 or x != points[t - 1, 0] or y != points[t - 1, 1]:
            values[ell] = z
            ctimes[ell] = t
            if ell < T:
                f2, e, a, b = _column_gaps(table, colkeys, colmin, colmax, x, y, z, cap)
                fresh2d[ell] = f2
                ev[ell] = e
                gp[ell] = a
                gm[ell] = b
                m2[ell] = 0.0 if e else m2tab[a, b]
            ell += 1
        if hs.insert(table, hs.pack3(x, y, z)):
            _note_site(colkeys, colmin, colmax, x, y, z)
    return values, ctimes, fresh2d, ev, gp, gm, m2


def _tables(n_sites: int, n_cols: int, mem_cap):
    table = hs.new_table(n_sites, mem_cap)
    colkeys = hs.new_table(n_cols, mem_cap, arrays=3)
    colmin = np.zeros(len(colkeys), dtype=np.int64)
    colmax = np.zeros(len(colkeys), dtype=np.int64)
    return table, colkeys, colmin, colmax


def embed(path: WalkPath3) -> MartingalePath:
    """Observe Z at the times (X, Y) changes, with the column geometry at each."""
    if path.rule is not Rule.Z_FIRST:
        raise ValueError("the embedded martingale is defined for the Z_FIRST rule only")
    tabs = _tables(len(path.points), len(path.points), None)
    out = _replay(path.points, *tabs, _M2_TABLE, GAP_CAP)
    return MartingalePath(*out)


def simulate_martingale(T: int, seed: int, trial: int = 0, bridge: bool = False,
                        mem_cap: int | None = None) -> MartingalePath:
    """Run the Z_FIRST walk until its planar part has made ``T`` moves.

    With ``bridge=True`` the planar moves form an exact bridge (``U_T = 0``),
    which samples the walk conditioned on its planar projection returning to
    the origin at clock time ``T``.
    """
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    key2d = trial_key(seed, trial, STREAM_2D)
    moves = bridge_codes(key2d, T) if bridge else moves_from_stream(key2d, T)
    key_z = trial_key(seed, trial, STREAM_Z)
    sites = 2 * T + 16
    while True:
        tabs = _tables(sites, T + 1, mem_cap)
        *out, status = _run_clock(T, key_z, moves, *tabs, _M2_TABLE, GAP_CAP)
        if status == OK:
            return MartingalePath(*out)
        if status == RANGE_EXCEEDED:
            raise hs.ResourceLimitError("walk left the packable coordinate range")
        sites *= 2


@dataclass(frozen=True)
class TailRow:
    m: int
    count: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.count / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.count, self.trials)


def increment_tail(increments, m_max: int = 10) -> list[TailRow]:
    """Empirical P(|dM| >= m) for m = 0..m_max with Wilson intervals.

    ``increments`` is an array of increments or an iterable of MartingalePath.
    """
    if isinstance(increments, np.ndarray):
        inc = np.abs(increments)
    else:
        inc = np.abs(np.concatenate([p.increments for p in increments]))
    if len(inc) == 0:
        raise ValueError("no increments")
    counts = np.bincount(np.minimum(inc, m_max + 1), minlength=m_max + 2)
    tail = np.cumsum(counts[::-1])[::-1]
    return [TailRow(m, int(tail[m]), len(inc)) for m in range(m_max + 1)]
