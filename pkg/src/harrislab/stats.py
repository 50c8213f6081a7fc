"""Small statistics toolkit shared by the coupling and experiment layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, ks_2samp

Z95 = 1.96

PASS = "pass"
WARN = "warn"
FAIL = "fail"
INFO = "info"


@dataclass(frozen=True)
class MeanCI:
    """Sample mean with the half-width of its normal confidence interval."""

    mean: float
    se: float
    count: int
    z: float = Z95

    @property
    def half_width(self) -> float:
        return self.z * self.se

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


def mean_ci(samples, z: float = Z95) -> MeanCI:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise ValueError("samples must be a nonempty 1-d array")
    m = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
    return MeanCI(m, se, len(x), z)


def bound_status(estimate: MeanCI, bound: float) -> str:
    """Three-state one-sided check of an upper bound.

    ``pass`` when even the CI-inflated mean stays below the bound, ``fail``
    when even the CI-deflated mean exceeds it, ``warn`` for the straddling
    zone where the raw mean may exceed the bound but the interval overlaps.
    """
    if estimate.high <= bound:
        return PASS
    if estimate.low > bound:
        return FAIL
    return WARN


def spawn_seeds(master_seed: int, count: int) -> list[int]:
    """Independent child seeds from a master seed via a splittable sequence."""
    children = np.random.SeedSequence(int(master_seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def variance_band(count: int, level: float = 0.99) -> tuple[float, float]:
    """Two-sided chi-square band for a unit-variance sample variance (ddof=1)."""
    alpha = 1.0 - level
    lo = chi2.ppf(alpha / 2.0, count - 1) / (count - 1)
    hi = chi2.ppf(1.0 - alpha / 2.0, count - 1) / (count - 1)
    return float(lo), float(hi)


def ks_pvalue(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov p-value (asymptotic)."""
    return float(ks_2samp(np.asarray(a), np.asarray(b), method="asymp").pvalue)


def loglog_fit(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log(y) against log(x)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)
