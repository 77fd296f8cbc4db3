"""Counter-based random streams.

Every trial owns a 64-bit key derived from ``(seed, trial, stream)``; output ``k``
of a stream is a keyed hash of ``k``.  Streams are therefore random-access,
independent of how trials are scheduled across workers, and cheap enough to
draw inside numba kernels.  The numpy functions and the ``nb_*`` kernels
implement the same formulas and agree bit for bit.
"""
from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

# stream ids within a trial
STREAM_Z = 0
STREAM_2D = 1
STREAM_AUX = 2
_N_STREAMS = 4

_INV53 = 1.0 / 9007199254740992.0


def root_key(seed: int) -> np.uint64:
    """Condense an arbitrary non-negative integer seed into a 64-bit root key."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(seed).generate_state(1, np.uint64)[0]


def mix64(z):
    """SplitMix64 finalizer; works on numpy uint64 scalars and arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def trial_keys(seed: int, trials, stream: int = STREAM_Z) -> np.ndarray:
    """Keys for the given trial indices (array-like of ints) and stream id."""
    idx = np.asarray(trials, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ctr = (idx * np.uint64(_N_STREAMS) + np.uint64(stream) + np.uint64(1)) * GOLDEN
    return mix64(root_key(seed) ^ mix64(ctr))


def trial_indices(trials) -> np.ndarray:
    """``range(trials)`` for an int, else the given indices as an int64 array."""
    if np.isscalar(trials):
        return np.arange(int(trials), dtype=np.int64)
    return np.asarray(trials, dtype=np.int64)


def trial_key(seed: int, trial: int, stream: int = STREAM_Z) -> np.uint64:
    return trial_keys(seed, [trial], stream)[0]


def stream_words(key, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the stream with the given key."""
    k = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(key) ^ mix64((k + np.uint64(1)) * GOLDEN))


def trial_generator(seed: int, trial: int, stream: int = STREAM_AUX) -> np.random.Generator:
    """A numpy Generator (Philox, keyed by the trial key) for vectorized draws."""
    return np.random.Generator(np.random.Philox(key=int(trial_key(seed, trial, stream))))


@njit(inline="always", nogil=True, cache=True)
def nb_mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(inline="always", nogil=True, cache=True)
def nb_word(key, k):
    """Output ``k`` (int) of stream ``key`` (uint64)."""
    c = (np.uint64(k) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    return nb_mix64(key ^ nb_mix64(c))


@njit(inline="always", nogil=True, cache=True)
def nb_uniform(key, k):
    return float(nb_word(key, k) >> np.uint64(11)) * 1.1102230246251565e-16


@njit(inline="always", nogil=True, cache=True)
def nb_popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return int((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(nogil=True, cache=True)
def nb_sum_signs(key, k0, m):
    """Sum of ``m`` fair +-1 signs read from bits of words ``k0, k0+1, ...``.

    Returns ``(sum, next_counter)``.  Bit ``j`` of a word is sign ``j``; the
    last word is masked to the bits actually used.
    """
    total = 0
    k = k0
    left = m
    while left >= 64:
        total += 2 * nb_popcount(nb_word(key, k)) - 64
        k += 1
        left -= 64
    if left > 0:
        mask = (np.uint64(1) << np.uint64(left)) - np.uint64(1)
        total += 2 * nb_popcount(nb_word(key, k) & mask) - left
        k += 1
    return total, k
