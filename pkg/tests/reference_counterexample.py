"""Independent, deliberately plain rewrite of the bounded-step martingale that
sits at 0 with positive probability.  It shares no code or random stream with
the package and is used only to cross-check the fast kernel's frequency."""
import math

import numpy as np


def terminal(n, rng):
    L = math.log(n)
    J = math.ceil(L)
    kstar = 0
    while n / 2**kstar > L * L:
        kstar += 1

    m = 0
    remaining = n  # t_l: time left before n
    for _ in range(kstar):
        walk = remaining - remaining // 2
        m += int(2 * rng.binomial(walk, 0.5) - walk)
        left = remaining // 2
        while abs(m) > L and left > 0:
            m += J if rng.random() < 0.5 else -J
            left -= 1
        if abs(m) > L:
            return m  # ran out of time: the path ended on big jumps
        remaining = left
    for j in range(remaining):
        if j == 0 and m != 0:
            m += abs(m) if rng.random() < 0.5 else -abs(m)
        elif rng.random() < 1 / (L * L):
            m += J if rng.random() < 0.5 else -J
    return m


def zero_frequency(n, trials, seed):
    rng = np.random.default_rng(seed)
    hits = sum(terminal(n, rng) == 0 for _ in range(trials))
    return hits, trials
