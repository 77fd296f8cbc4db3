"""Open-addressed hash tables keyed on packed lattice coordinates (numba).

Keys are non-negative int64 values packed with 21 bits per signed coordinate;
``EMPTY`` marks a free slot.  Tables are plain int64 arrays whose length is a
power of two, probed linearly.  A parallel value array indexed by the same slot
turns a set into a map.
"""
from __future__ import annotations

import os

import numpy as np
from numba import njit

from .rng import nb_mix64

EMPTY = -1
COORD_BITS = 21
COORD_LIMIT = 1 << (COORD_BITS - 1)  # |coordinate| must stay below this
_OFF = COORD_LIMIT

DEFAULT_MEM_CAP = 8 * 1024**3
MEM_CAP_ENV = "SIWALK_MEM_CAP_BYTES"


class ResourceLimitError(MemoryError):
    """A simulation would exceed the memory cap or the packable coordinate range."""


def mem_cap() -> int:
    raw = os.environ.get(MEM_CAP_ENV)
    if raw is None:
        return DEFAULT_MEM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{MEM_CAP_ENV} must be an integer byte count, got {raw!r}") from None
    if cap <= 0:
        raise ValueError(f"{MEM_CAP_ENV} must be positive, got {cap}")
    return cap


def table_size(entries: int) -> int:
    """Power-of-two slot count keeping the load factor at or below 1/2."""
    size = 16
    while size < 2 * entries:
        size *= 2
    return size


def new_table(entries: int, cap: int | None = None, arrays: int = 1) -> np.ndarray:
    """Allocate an empty table for ``entries`` keys.

    ``arrays`` counts companion 8-byte arrays of the same length the caller will
    allocate, so the cap check covers them too.
    """
    size = table_size(entries)
    need = 8 * size * arrays
    cap = mem_cap() if cap is None else cap
    if need > cap:
        raise ResourceLimitError(
            f"visited-set tables need {need} bytes, above the memory cap of {cap} bytes"
        )
    return np.full(size, EMPTY, dtype=np.int64)


@njit(inline="always", nogil=True, cache=True)
def pack3(x, y, z):
    return ((x + _OFF) << 42) | ((y + _OFF) << 21) | (z + _OFF)


@njit(inline="always", nogil=True, cache=True)
def pack2(x, y):
    return ((x + _OFF) << 21) | (y + _OFF)


@njit(inline="always", nogil=True, cache=True)
def in_range(c):
    return -COORD_LIMIT < c < COORD_LIMIT


@njit(inline="always", nogil=True, cache=True)
def find_slot(keys, key):
    """Slot holding ``key``, or the empty slot where it would be inserted."""
    mask = np.uint64(keys.shape[0] - 1)
    i = np.int64(nb_mix64(np.uint64(key)) & mask)
    m = keys.shape[0] - 1
    while True:
        k = keys[i]
        if k == key or k == EMPTY:
            return i
        i = (i + 1) & m


@njit(inline="always", nogil=True, cache=True)
def contains(keys, key):
    return keys[find_slot(keys, key)] == key


@njit(inline="always", nogil=True, cache=True)
def insert(keys, key):
    """Insert ``key``; True when it was not present before."""
    i = find_slot(keys, key)
    if keys[i] == key:
        return False
    keys[i] = key
    return True
