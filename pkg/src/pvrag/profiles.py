"""24-hour time grid and normalized diurnal load / PV shape functions.

The operating day is discretized into 96 steps of 15 minutes; step t
(1-based) corresponds to the hour tau = (t-1) * 0.25 in [0, 24).

Default shapes: the load curve is a 0.45 baseline plus a dominant Gaussian
bump at noon and a smaller one at 19:00, rescaled so its maximum over the
grid is exactly 1; PV output is the clear-sky arch sin^2(pi*(tau-6)/12)
between 06:00 and 18:00 and zero at night. Either shape can be replaced by
a 96-value profile file (one value per line, each in [0, 1]); file values
are returned exactly at grid points and held constant within each step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

DT_MINUTES = 15
STEPS = 96


@dataclass(frozen=True)
class TimeGrid:
    dt_minutes: int = DT_MINUTES
    steps: int = STEPS

    def __post_init__(self):
        if self.steps * self.dt_minutes != 24 * 60:
            raise ValueError("time grid must cover exactly 24 hours")

    def tau_hours(self, t: int) -> float:
        """Hour of 1-based step t."""
        if not 1 <= t <= self.steps:
            raise ValueError(f"step {t} outside 1..{self.steps}")
        return (t - 1) * self.dt_minutes / 60.0

    def taus(self) -> np.ndarray:
        return np.arange(self.steps) * (self.dt_minutes / 60.0)


def _check_tau(tau: float) -> float:
    if not 0.0 <= tau < 24.0:
        raise ValueError(f"tau must be in [0, 24), got {tau}")
    return tau


def _raw_load_shape(tau: float) -> float:
    midday = 0.55 * math.exp(-((tau - 12.0) ** 2) / (2 * 3.0**2))
    evening = 0.25 * math.exp(-((tau - 19.0) ** 2) / (2 * 1.0**2))
    return 0.45 + midday + evening


def default_pv_shape(tau: float) -> float:
    _check_tau(tau)
    if tau < 6.0 or tau > 18.0:
        return 0.0
    return math.sin(math.pi * (tau - 6.0) / 12.0) ** 2


class DayProfiles:
    """Paired load and PV shape functions over [0, 24)."""

    def __init__(self, load_fn: Callable[[float], float],
                 pv_fn: Callable[[float], float]):
        self._load = load_fn
        self._pv = pv_fn

    def load(self, tau: float) -> float:
        return self._load(_check_tau(tau))

    def pv(self, tau: float) -> float:
        return self._pv(_check_tau(tau))

    @classmethod
    def default(cls, grid: Optional[TimeGrid] = None) -> "DayProfiles":
        grid = grid or TimeGrid()
        peak = max(_raw_load_shape(t) for t in grid.taus())
        return cls(lambda tau: _raw_load_shape(tau) / peak, default_pv_shape)

    @classmethod
    def from_dir(cls, directory: Path | str,
                 grid: Optional[TimeGrid] = None) -> "DayProfiles":
        """Load overrides from <dir>/load_profile.txt and <dir>/pv_profile.txt.

        A missing file keeps the default shape for that curve.
        """
        grid = grid or TimeGrid()
        d = Path(directory)
        defaults = cls.default(grid)
        load_fn, pv_fn = defaults._load, defaults._pv
        load_path = d / "load_profile.txt"
        pv_path = d / "pv_profile.txt"
        if load_path.exists():
            load_fn = _step_function(_read_profile(load_path, grid), grid)
        if pv_path.exists():
            pv_fn = _step_function(_read_profile(pv_path, grid), grid)
        return cls(load_fn, pv_fn)


def _read_profile(path: Path, grid: TimeGrid) -> np.ndarray:
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    values = [float(ln) for ln in lines if ln]
    if len(values) != grid.steps:
        raise ValueError(
            f"{path}: profile must contain exactly {grid.steps} values, "
            f"found {len(values)}"
        )
    arr = np.asarray(values, dtype=float)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{path}: profile values must lie in [0, 1]")
    return arr


def _step_function(values: np.ndarray, grid: TimeGrid) -> Callable[[float], float]:
    dt_h = grid.dt_minutes / 60.0

    def fn(tau: float) -> float:
        return float(values[int(tau / dt_h)])

    return fn
