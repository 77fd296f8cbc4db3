"""Encoding of planar unit steps drawn from a counter-based stream.

A move is two bits ``(b0, b1)``: ``b0`` is the sign of the step of ``x + y`` and
``b1`` the sign of the step of ``x - y``.  The four codes map onto the four unit
steps, so a uniformly random code is a simple random walk step, and the two
rotated coordinates are independent +-1 walks.  Word ``w`` of the stream holds
moves ``32 w .. 32 w + 31``, move ``j`` in bits ``2j, 2j+1``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import nb_word

# code -> (dx, dy)
DX = np.array([-1, 0, 0, 1], dtype=np.int64)
DY = np.array([0, 1, -1, 0], dtype=np.int64)

U_MASK = np.uint64(0x5555555555555555)
V_MASK = np.uint64(0xAAAAAAAAAAAAAAAA)


@njit(nogil=True, cache=True)
def moves_from_stream(key, m):
    out = np.empty(m, dtype=np.uint8)
    w = np.uint64(0)
    for j in range(m):
        if (j & 31) == 0:
            w = nb_word(key, j >> 5)
        out[j] = np.uint8((w >> np.uint64(2 * (j & 31))) & np.uint64(3))
    return out


def codes_from_steps(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Inverse of the (DX, DY) table."""
    du = dx + dy
    dv = dx - dy
    return (((du > 0).astype(np.uint8)) | ((dv > 0).astype(np.uint8) << 1)).astype(np.uint8)
