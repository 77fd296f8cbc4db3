"""Binomial intervals and trend checks shared by the experiment modules."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722


def wilson_interval(count: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError(f"trials must be positive, got {trials}")
    if not 0 <= count <= trials:
        raise ValueError(f"count {count} outside [0, {trials}]")
    p = count / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # clamp so the point estimate is always inside its own interval
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


@dataclass(frozen=True)
class Proportion:
    count: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.count / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.count, self.trials)

    @property
    def se(self) -> float:
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.trials)

    def __repr__(self):
        lo, hi = self.interval
        return f"Proportion({self.count}/{self.trials}={self.estimate:.4g} [{lo:.4g}, {hi:.4g}])"


def significantly_below(later: float, later_se: float, earlier: float, earlier_se: float,
                        z: float = Z95_ONE_SIDED) -> bool:
    """One-sided test that ``later < earlier`` for independent estimates."""
    se = math.hypot(later_se, earlier_se)
    if se == 0.0:
        return later < earlier
    return (earlier - later) / se > z


def strictly_decreasing(estimates, ses, z: float = Z95_ONE_SIDED) -> bool:
    """Every consecutive drop is significant at the one-sided level ``z``."""
    est = list(estimates)
    se = list(ses)
    return all(
        significantly_below(est[i + 1], se[i + 1], est[i], se[i], z) for i in range(len(est) - 1)
    )


def decreasing_trend(estimates, ses, z: float = Z95_ONE_SIDED) -> bool:
    """No significant rise between neighbours and the last estimate at or below the first.

    A flat run of zeros counts as decreasing; use ``strictly_decreasing`` when
    every drop has to be resolved.
    """
    est = list(estimates)
    se = list(ses)
    if len(est) < 2:
        raise ValueError("need at least two points")
    no_rise = not any(
        significantly_below(est[i], se[i], est[i + 1], se[i + 1], z) for i in range(len(est) - 1)
    )
    return no_rise and est[-1] <= est[0]


def proportion_se(count, trials) -> np.ndarray:
    p = np.asarray(count, dtype=float) / np.asarray(trials, dtype=float)
    return np.sqrt(p * (1 - p) / np.asarray(trials, dtype=float))
