"""A martingale with bounded steps and unit conditional variance that sits at 0
at time n with probability bounded away from zero.

Construction, with ``L = ln n`` and ``J = ceil(L)``:

* phase 1: simple +-1 steps up to time n/2;
* then for l = 1..k*: a walk with steps +-J until ``|M| <= L`` (this fixes the
  remaining time ``t_l``), followed by ``ceil(t_l / 2)`` simple steps;
* if some search runs out of time the big-jump walk simply continues to n;
* otherwise the last ``t_{k*} <= L^2`` steps start with one corrective jump
  ``+-|M|`` and are then lazy: a +-J jump with probability ``1/L^2``, else stay.

``k*`` is the first k with ``n / 2^k <= L^2``.  J uses the ceiling so the lazy
steps keep conditional variance ``J^2 / L^2 >= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import nb_sum_signs, nb_uniform, nb_word, trial_indices, trial_keys
from .stats import Proportion

SRW = 0
BIG_JUMP = 1
CORRECTIVE = 2
FINAL_LAZY = 3
PHASE_NAMES = {SRW: "SRW", BIG_JUMP: "BIG_JUMP", CORRECTIVE: "CORRECTIVE", FINAL_LAZY: "FINAL_LAZY"}

_S_SRW, _S_BIG, _S_LAZY = 0, 1, 2


def k_star(n: int) -> int:
    """First integer k with n / 2^k <= (ln n)^2."""
    bound = math.log(n) ** 2
    k = 0
    while n / 2**k > bound:
        k += 1
    return k


def jump_size(n: int) -> int:
    return math.ceil(math.log(n))


def _check_n(n):
    if n < 3 or jump_size(n) < 2 or k_star(n) < 1:
        raise ValueError(f"n={n} too small for the construction (need ceil(ln n) >= 2, k* >= 1)")


@njit(inline="always", nogil=True, cache=True)
def _bit(key, i):
    return np.int64((nb_word(key, i >> 6) >> np.uint64(i & 63)) & np.uint64(1))


@njit(nogil=True, cache=True)
def _build(n, kstar, J, logn, key_s, key_b, key_l, record):
    """Returns (terminal, t_l array, truncated, values, tags).

    Every segment starts on a fresh stream word, so recording and non-recording
    runs consume identical bits and agree path for path.
    """
    size = n + 1 if record else 1
    vals = np.zeros(size, dtype=np.int64)
    tags = np.full(max(size - 1, 1), -1, dtype=np.int8)
    ts = np.zeros(kstar + 1, dtype=np.int64)
    ts[0] = n
    m = 0
    t = 0
    cs = 0
    cb = 0
    prev = n
    truncated = False
    inv_l2 = 1.0 / (logn * logn)
    for ell in range(1, kstar + 1):
        steps = prev - prev // 2
        if record:
            for i in range(steps):
                m += 2 * _bit(key_s, 64 * cs + i) - 1
                tags[t] = SRW
                t += 1
                vals[t] = m
        else:
            m += nb_sum_signs(key_s, cs, steps)[0]
            t += steps
        cs += (steps + 63) // 64
        budget = prev // 2
        used = 0
        while abs(m) > logn and used < budget:
            m += J * (2 * _bit(key_b, 64 * cb + used) - 1)
            used += 1
            if record:
                tags[t] = BIG_JUMP
                vals[t + 1] = m
            t += 1
        cb += (used + 63) // 64
        if abs(m) > logn:
            truncated = True
            ts[ell] = -1
            break
        ts[ell] = budget - used
        prev = budget - used
    if not truncated:
        cl = 0
        d = abs(m)
        for j in range(ts[kstar]):
            if j == 0 and d != 0:
                m += d if (nb_word(key_l, cl) & np.uint64(1)) else -d
                cl += 1
            else:
                if nb_uniform(key_l, cl) < inv_l2:
                    m += J if (nb_word(key_l, cl + 1) & np.uint64(1)) else -J
                cl += 2
            if record:
                tags[t] = CORRECTIVE if j == 0 else FINAL_LAZY
                vals[t + 1] = m
            t += 1
    return m, ts, truncated, vals, tags


@dataclass(frozen=True)
class PhaseSchedule:
    n: int
    k_star: int
    times: np.ndarray  # t_1..t_{k*} at index 1..k*; index 0 holds n; -1 marks the truncating search
    truncated: bool
    tags: np.ndarray  # phase of step i -> i+1

    @property
    def realized(self) -> list[int]:
        out = []
        for v in self.times[1:]:
            if v < 0:
                break
            out.append(int(v))
        return out


@dataclass(frozen=True)
class CounterexamplePath:
    values: np.ndarray
    schedule: PhaseSchedule

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def jump(self) -> int:
        return jump_size(self.n)


def _keys(seed, trials):
    idx = trial_indices(trials)
    return (trial_keys(seed, idx, _S_SRW), trial_keys(seed, idx, _S_BIG), trial_keys(seed, idx, _S_LAZY))


def build(n: int, seed: int, trial: int = 0) -> CounterexamplePath:
    _check_n(n)
    ks, kb, kl = (k[0] for k in _keys(seed, [trial]))
    kst = k_star(n)
    _, ts, truncated, vals, tags = _build(n, kst, jump_size(n), math.log(n), ks, kb, kl, True)
    return CounterexamplePath(vals, PhaseSchedule(n, kst, ts, bool(truncated), tags))


@njit(nogil=True, cache=True)
def _terminals(n, kstar, J, logn, ks, kb, kl):
    out = np.empty(ks.shape[0], dtype=np.int64)
    for i in range(ks.shape[0]):
        out[i] = _build(n, kstar, J, logn, ks[i], kb[i], kl[i], False)[0]
    return out


def terminals(n: int, trials, seed: int) -> np.ndarray:
    _check_n(n)
    ks, kb, kl = _keys(seed, trials)
    return _terminals(n, k_star(n), jump_size(n), math.log(n), ks, kb, kl)


def return_prob(n: int, trials, seed: int) -> Proportion:
    """Frequency of M_n = 0 over independent builds (count or trial indices)."""
    idx = trial_indices(trials)
    if len(idx) < 1:
        raise ValueError(f"trials must be at least 1, got {len(idx)}")
    return Proportion(int(np.count_nonzero(terminals(n, idx, seed) == 0)), len(idx))


@dataclass(frozen=True)
class HypothesisReport:
    """Per-step check of both hypotheses on one path.

    ``variance`` holds the conditional variance implied by each step's phase;
    ``flagged`` marks corrective steps taken from 0, which fall back to the lazy
    rule.
    """

    variance: np.ndarray
    increment_ok: np.ndarray
    law_ok: np.ndarray
    flagged: np.ndarray
    schedule_ok: bool

    @property
    def variance_violations(self) -> int:
        return int(np.count_nonzero(self.variance < 1))

    @property
    def increment_violations(self) -> int:
        return int(np.count_nonzero(~self.increment_ok))

    @property
    def ok(self) -> bool:
        return (self.variance_violations == 0 and self.increment_violations == 0
                and bool(self.law_ok.all()) and self.schedule_ok)


def verify_hypotheses(path: CounterexamplePath) -> HypothesisReport:
    n = path.n
    L = path.log_n
    J = path.jump
    inc = np.diff(path.values)
    before = np.abs(path.values[:-1])
    tags = path.schedule.tags
    var = np.empty(n)
    law = np.empty(n, dtype=bool)
    flagged = np.zeros(n, dtype=bool)
    lazy_var = J * J / (L * L)

    srw = tags == SRW
    var[srw] = 1.0
    law[srw] = np.abs(inc[srw]) == 1
    big = tags == BIG_JUMP
    var[big] = J * J
    law[big] = np.abs(inc[big]) == J
    lazy = tags == FINAL_LAZY
    var[lazy] = lazy_var
    law[lazy] = (inc[lazy] == 0) | (np.abs(inc[lazy]) == J)
    corr = tags == CORRECTIVE
    from_zero = corr & (before == 0)
    flagged[from_zero] = True
    var[corr] = before[corr].astype(float) ** 2
    var[from_zero] = lazy_var
    law[corr] = np.abs(inc[corr]) == before[corr]
    law[from_zero] = (inc[from_zero] == 0) | (np.abs(inc[from_zero]) == J)
    untagged = tags < 0
    var[untagged] = 0.0
    law[untagged] = False

    sched = path.schedule
    ok = True
    for ell, t_l in enumerate(sched.realized, start=1):
        if t_l > n / 2**ell:
            ok = False
        if t_l > 0 and abs(path.values[n - t_l]) > L:
            ok = False
    return HypothesisReport(var, np.abs(inc) <= J, law, flagged, ok)
