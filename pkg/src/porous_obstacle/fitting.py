"""Log-log least squares with a bootstrap confidence interval."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int

    def __str__(self):
        return f"{self.slope:.3f} [{self.ci_low:.3f}, {self.ci_high:.3f}]"


def loglog_slope(x, y, n_boot=2000, seed=0, level=0.95):
    """Slope of log y against log x; resamples (x, y) pairs for the interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D of equal length")
    if x.size < 3:
        raise ValueError(f"need at least 3 sweep points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate sweep: all x values equal")
    slope, intercept = np.polyfit(lx, ly, 1)
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, x.size, x.size)
        if np.ptp(lx[idx]) == 0:
            continue
        boots.append(np.polyfit(lx[idx], ly[idx], 1)[0])
    alpha = (1 - level) / 2
    lo, hi = np.quantile(boots, [alpha, 1 - alpha]) if boots else (slope, slope)
    return SlopeFit(float(slope), float(intercept), float(min(lo, slope)), float(max(hi, slope)), int(x.size))


def halving_order(coarse, fine, factor):
    """Observed order from two errors at resolutions differing by ``factor``."""
    if coarse <= 0 or fine <= 0:
        return float("inf") if fine == 0 else float("nan")
    return float(np.log(coarse / fine) / np.log(factor))
