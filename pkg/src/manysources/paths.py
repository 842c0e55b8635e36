"""Sample-path value types: step paths, piecewise-linear paths, partitions.

These are the finite-window cadlag objects the queueing and rate-function
layers operate on.  A :class:`StepPath` is a pure-jump path superimposed on a
symbolic linear drift (the drift is carried as a slope field rather than
sampled, so suprema can be evaluated exactly at event times).  A
:class:`PiecewiseLinearPath` is an absolutely continuous path given by
breakpoints and values; it is the domain of every rate functional.

All paths start at value 0 at time 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "StepPath",
    "PiecewiseLinearPath",
    "Partition",
    "scaled_uniform_norm",
]


def _as_float_array(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr.reshape(-1)


@dataclass(frozen=True)
class StepPath:
    """Pure-jump path plus linear drift on a finite window.

    value(t) = sum of jump sizes at times <= t  +  drift * t, right-continuous,
    value(0) = 0 (jump times are strictly positive).
    """

    window: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    jumps: np.ndarray = field(default_factory=lambda: np.empty(0))
    drift: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _as_float_array(self.times))
        object.__setattr__(self, "jumps", _as_float_array(self.jumps))
        if self.window <= 0:
            raise ConfigurationError(f"window must be positive, got {self.window}")
        if self.times.shape != self.jumps.shape:
            raise ConfigurationError("times and jumps must have equal length")
        if self.times.size:
            if not np.all(np.diff(self.times) > 0):
                raise ConfigurationError("jump times must be strictly increasing")
            if self.times[0] <= 0 or self.times[-1] > self.window:
                raise ConfigurationError("jump times must lie in (0, window]")

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def value(self, t: float | np.ndarray) -> float | np.ndarray:
        """Right-continuous path value at time(s) t."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right")
        cum = np.concatenate(([0.0], np.cumsum(self.jumps)))
        out = cum[idx] + self.drift * t_arr
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def post_jump_values(self) -> np.ndarray:
        """Path values at each jump time (immediately after the jump)."""
        return np.cumsum(self.jumps) + self.drift * self.times

    def pre_jump_values(self) -> np.ndarray:
        """Left limits of the path at each jump time."""
        return self.post_jump_values() - self.jumps


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Absolutely continuous path: values at breakpoints, linear in between."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "breakpoints", _as_float_array(self.breakpoints))
        object.__setattr__(self, "values", _as_float_array(self.values))
        ts, vs = self.breakpoints, self.values
        if ts.size < 2:
            raise ConfigurationError("a piecewise-linear path needs at least two breakpoints")
        if ts.shape != vs.shape:
            raise ConfigurationError("breakpoints and values must have equal length")
        if ts[0] != 0.0 or vs[0] != 0.0:
            raise ConfigurationError("paths start at (0, 0)")
        if not np.all(np.diff(ts) > 0):
            raise ConfigurationError("breakpoint times must be strictly increasing")
        if not np.all(np.isfinite(vs)):
            raise ConfigurationError("path values must be finite")

    @property
    def window(self) -> float:
        return float(self.breakpoints[-1])

    def value(self, t: float | np.ndarray) -> float | np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        out = np.interp(t_arr, self.breakpoints, self.values)
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    @staticmethod
    def from_segments(durations: Iterable[float], slopes: Iterable[float]) -> "PiecewiseLinearPath":
        """Build a path from consecutive (duration, slope) segments starting at 0."""
        durations = _as_float_array(durations)
        slopes = _as_float_array(slopes)
        if durations.shape != slopes.shape or durations.size == 0:
            raise ConfigurationError("durations and slopes must be equal-length and nonempty")
        if np.any(durations <= 0):
            raise ConfigurationError("segment durations must be positive")
        ts = np.concatenate(([0.0], np.cumsum(durations)))
        vs = np.concatenate(([0.0], np.cumsum(durations * slopes)))
        return PiecewiseLinearPath(ts, vs)


@dataclass(frozen=True)
class Partition:
    """Ordered grid 0 = j0 < j1 < ... <= 1 of unit-interval fractions, plus a horizon T.

    The induced time grid is ``T * j`` for the rate functionals that evaluate
    finite-dimensional restrictions over [0, T].
    """

    fractions: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "fractions", _as_float_array(self.fractions))
        js = self.fractions
        if self.horizon <= 0:
            raise ConfigurationError("partition horizon must be positive")
        if js.size < 2 or js[0] != 0.0:
            raise ConfigurationError("partition must start at 0 and contain at least one interval")
        if not np.all(np.diff(js) > 0):
            raise ConfigurationError("partition fractions must be strictly increasing")
        if js[-1] > 1.0:
            raise ConfigurationError("partition fractions must not exceed 1")

    @property
    def times(self) -> np.ndarray:
        """Absolute grid times T * j (including the leading 0)."""
        return self.horizon * self.fractions

    def interval_lengths(self) -> np.ndarray:
        return self.horizon * np.diff(self.fractions)


def scaled_uniform_norm(path: StepPath | PiecewiseLinearPath) -> float:
    """sup over the window of |x(t)| / (1 + t), evaluated exactly.

    On every interval where the path is linear, the ratio (a + b t)/(1 + t) is
    monotone, so the supremum is attained at an interval endpoint or at a jump
    boundary (either side of the jump).
    """
    if isinstance(path, PiecewiseLinearPath):
        ts, vs = path.breakpoints, path.values
        return float(np.max(np.abs(vs) / (1.0 + ts)))
    if isinstance(path, StepPath):
        candidates = [0.0, abs(path.value(path.window)) / (1.0 + path.window)]
        if path.n_jumps:
            post = path.post_jump_values()
            pre = path.pre_jump_values()
            ratios = np.abs(np.concatenate((post, pre))) / (1.0 + np.tile(path.times, 2))
            candidates.append(float(np.max(ratios)))
        return float(max(candidates))
    raise ConfigurationError(f"unsupported path type {type(path).__name__}")
