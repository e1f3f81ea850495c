"""Log-log slope fits for convergence and decay studies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientSweep


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def check_sweep(xs: Sequence[float], min_points: int = 3, rtol: float = 1e-6) -> np.ndarray:
    """Validate a geometric sweep of positive values."""
    x = np.asarray(xs, dtype=float)
    if len(x) < min_points:
        raise InsufficientSweep(f"need at least {min_points} sweep points, got {len(x)}")
    if np.any(x <= 0):
        raise InsufficientSweep("sweep values must be positive")
    ratios = x[1:] / x[:-1]
    if not np.allclose(ratios, ratios[0], rtol=rtol, atol=0):
        raise InsufficientSweep("sweep is not geometric")
    return x


def loglog_fit(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    """Least-squares line through ``(log x, log y)``; NaN when any ``y <= 0``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 2:
        raise InsufficientSweep("a slope needs at least two points")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        return SlopeFit(float("nan"), float("nan"), float("nan"))
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2)


def halving_slopes(hs: Sequence[float], errs: Sequence[float]) -> list[float]:
    """Observed orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    h = np.asarray(hs, dtype=float)
    e = np.asarray(errs, dtype=float)
    return [float(np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1])) for i in range(len(h) - 1)]
