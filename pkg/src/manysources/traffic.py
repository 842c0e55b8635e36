"""Marked point-process traffic sources: families, mark laws, sampling.

A traffic model is a stationary arrival-point family paired with an i.i.d.
positive mark law (work per arrival).  Three families are provided:

* Poisson arrivals at a given rate,
* stationary renewal arrivals with deterministic or Erlang inter-arrival law,
* a two-state Markov-modulated (on/off) process emitting Poisson points while on.

Every family is initialised in its stationary regime so increments are
stationary from time 0.  Paths are sampled on finite windows as
:class:`MarkedPath` objects (event times plus marks) and can be superposed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .errors import ConfigurationError, UnsupportedModelError

__all__ = [
    "InterArrivalLaw",
    "PoissonFamily",
    "RenewalFamily",
    "OnOffFamily",
    "ProcessFamily",
    "UnitMarks",
    "DeterministicMarks",
    "ExponentialMarks",
    "DiscreteMarks",
    "MarkLaw",
    "TrafficModel",
    "MarkedPath",
    "derive_seed",
    "sample_path",
    "sample_total_work",
    "superpose",
]


# ---------------------------------------------------------------------------
# Arrival-point families
# ---------------------------------------------------------------------------


class InterArrivalLaw(str, Enum):
    """Inter-arrival law of a renewal family."""

    DETERMINISTIC = "deterministic"
    ERLANG = "erlang"


@dataclass(frozen=True)
class PoissonFamily:
    """Poisson arrival points with the given rate."""

    rate: float

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ConfigurationError(f"Poisson rate must be positive and finite, got {self.rate}")

    @property
    def point_rate(self) -> float:
        return self.rate


@dataclass(frozen=True)
class RenewalFamily:
    """Stationary renewal arrivals with mean rate ``rate``.

    ``law`` selects the inter-arrival distribution: deterministic spacing
    1/rate, or Erlang with ``stages`` exponential stages (each of rate
    ``stages * rate`` so the mean spacing stays 1/rate).  The first point is
    drawn from the equilibrium forward-recurrence-time law, which makes the
    increment process stationary.
    """

    rate: float
    law: InterArrivalLaw = InterArrivalLaw.DETERMINISTIC
    stages: int = 1

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ConfigurationError(f"renewal rate must be positive and finite, got {self.rate}")
        law = InterArrivalLaw(self.law)
        object.__setattr__(self, "law", law)
        if law is InterArrivalLaw.ERLANG and self.stages < 1:
            raise ConfigurationError(f"Erlang stages must be >= 1, got {self.stages}")

    @property
    def point_rate(self) -> float:
        return self.rate


@dataclass(frozen=True)
class OnOffFamily:
    """Markov-modulated on/off source.

    The modulating chain switches off->on at rate ``on_rate`` and on->off at
    rate ``off_rate``; while on, arrival points occur as a Poisson process of
    rate ``emission_rate``.  The chain starts in its stationary law, so the
    long-run point rate is ``emission_rate * on_rate / (on_rate + off_rate)``.
    """

    on_rate: float
    off_rate: float
    emission_rate: float

    def __post_init__(self) -> None:
        for name in ("on_rate", "off_rate", "emission_rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive and finite, got {v}")

    @property
    def stationary_on_probability(self) -> float:
        return self.on_rate / (self.on_rate + self.off_rate)

    @property
    def point_rate(self) -> float:
        return self.emission_rate * self.stationary_on_probability


ProcessFamily = Union[PoissonFamily, RenewalFamily, OnOffFamily]


# ---------------------------------------------------------------------------
# Mark laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitMarks:
    """Every arrival carries one unit of work."""


@dataclass(frozen=True)
class DeterministicMarks:
    """Every arrival carries a fixed positive amount of work."""

    value: float

    def __post_init__(self) -> None:
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigurationError(f"mark value must be positive and finite, got {self.value}")


@dataclass(frozen=True)
class ExponentialMarks:
    """Exponentially distributed work with the given mean."""

    mean: float

    def __post_init__(self) -> None:
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ConfigurationError(f"mark mean must be positive and finite, got {self.mean}")


@dataclass(frozen=True)
class DiscreteMarks:
    """Work drawn from a finite set of positive values with given probabilities."""

    values: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", probs)
        if len(values) == 0 or len(values) != len(probs):
            raise ConfigurationError("values and probabilities must be nonempty and equal-length")
        if any(v <= 0 or not math.isfinite(v) for v in values):
            raise ConfigurationError("discrete mark values must be positive and finite")
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
            raise ConfigurationError("probabilities must be nonnegative and sum to 1")


MarkLaw = Union[UnitMarks, DeterministicMarks, ExponentialMarks, DiscreteMarks]


# ---------------------------------------------------------------------------
# Traffic model = family + marks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrafficModel:
    """A stationary arrival family together with an i.i.d. mark law."""

    family: ProcessFamily
    marks: MarkLaw = UnitMarks()

    def __post_init__(self) -> None:
        if not isinstance(self.family, (PoissonFamily, RenewalFamily, OnOffFamily)):
            raise ConfigurationError(f"unknown process family {type(self.family).__name__}")
        if not isinstance(
            self.marks, (UnitMarks, DeterministicMarks, ExponentialMarks, DiscreteMarks)
        ):
            raise ConfigurationError(f"unknown mark law {type(self.marks).__name__}")

    # -- rates and moments ---------------------------------------------------

    @property
    def point_rate(self) -> float:
        """Long-run arrival-point rate (points per unit time)."""
        return self.family.point_rate

    @property
    def mark_mean(self) -> float:
        m = self.marks
        if isinstance(m, UnitMarks):
            return 1.0
        if isinstance(m, DeterministicMarks):
            return m.value
        if isinstance(m, ExponentialMarks):
            return m.mean
        return float(np.dot(m.values, m.probabilities))

    @property
    def mark_second_moment(self) -> float:
        m = self.marks
        if isinstance(m, UnitMarks):
            return 1.0
        if isinstance(m, DeterministicMarks):
            return m.value**2
        if isinstance(m, ExponentialMarks):
            return 2.0 * m.mean**2
        return float(np.dot(np.square(m.values), m.probabilities))

    @property
    def mean_work_rate(self) -> float:
        """Long-run work arrival rate: point rate times mean mark."""
        return self.point_rate * self.mark_mean

    @property
    def work_variance_rate(self) -> float:
        """Point rate times the second moment of a mark.

        This is the variance of work per unit time for Poisson arrivals and
        the local-variance coefficient used by the diffusion rate functionals.
        """
        return self.point_rate * self.mark_second_moment

    @property
    def is_poisson(self) -> bool:
        return isinstance(self.family, PoissonFamily)

    # -- mark transform --------------------------------------------------------

    @property
    def mark_mgf_domain_sup(self) -> float:
        """Supremum of exponents at which the mark transform is finite."""
        if isinstance(self.marks, ExponentialMarks):
            return 1.0 / self.marks.mean
        return math.inf

    def mark_mgf(self, theta: float) -> float:
        """Moment generating function E[exp(theta * Y)] of one mark.

        Returns ``inf`` at and beyond the boundary of the finite domain.
        """
        m = self.marks
        if isinstance(m, UnitMarks):
            return math.exp(theta) if theta < 700 else math.inf
        if isinstance(m, DeterministicMarks):
            z = theta * m.value
            return math.exp(z) if z < 700 else math.inf
        if isinstance(m, ExponentialMarks):
            if theta >= 1.0 / m.mean:
                return math.inf
            return 1.0 / (1.0 - theta * m.mean)
        z = theta * np.asarray(m.values)
        if np.max(z) >= 700:
            return math.inf
        return float(np.dot(np.exp(z), m.probabilities))

    def mark_mgf_derivative(self, theta: float) -> float:
        """Derivative E[Y exp(theta * Y)] of the mark transform."""
        m = self.marks
        if isinstance(m, UnitMarks):
            return math.exp(theta) if theta < 700 else math.inf
        if isinstance(m, DeterministicMarks):
            z = theta * m.value
            return m.value * math.exp(z) if z < 700 else math.inf
        if isinstance(m, ExponentialMarks):
            if theta >= 1.0 / m.mean:
                return math.inf
            return m.mean / (1.0 - theta * m.mean) ** 2
        z = theta * np.asarray(m.values)
        if np.max(z) >= 700:
            return math.inf
        return float(np.dot(np.asarray(m.values) * np.exp(z), m.probabilities))

    def sample_marks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        m = self.marks
        if isinstance(m, UnitMarks):
            return np.ones(size)
        if isinstance(m, DeterministicMarks):
            return np.full(size, m.value)
        if isinstance(m, ExponentialMarks):
            return rng.exponential(m.mean, size)
        return rng.choice(np.asarray(m.values), size=size, p=np.asarray(m.probabilities))


def mark_mgf(model: TrafficModel, theta: float) -> float:
    """Moment generating function of one mark of ``model`` at exponent ``theta``."""
    return model.mark_mgf(theta)


# ---------------------------------------------------------------------------
# Sampled paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkedPath:
    """Events of a marked point process on (0, window]: times and marks."""

    window: float
    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float).reshape(-1)
        marks = np.asarray(self.marks, dtype=float).reshape(-1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        if self.window <= 0:
            raise ConfigurationError(f"window must be positive, got {self.window}")
        if times.shape != marks.shape:
            raise ConfigurationError("times and marks must have equal length")
        if times.size:
            if not np.all(np.diff(times) >= 0):
                raise ConfigurationError("event times must be nondecreasing")
            if times[0] <= 0 or times[-1] > self.window:
                raise ConfigurationError("event times must lie in (0, window]")
        if np.any(marks <= 0):
            raise ConfigurationError("marks must be positive")

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def total_work(self) -> float:
        return float(np.sum(self.marks))

    def cumulative(self, t: float | np.ndarray) -> float | np.ndarray:
        """Total work arrived in (0, t] (right-continuous counting integral)."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right")
        cum = np.concatenate(([0.0], np.cumsum(self.marks)))
        out = cum[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def derive_seed(seed: int, *indices: int) -> np.random.SeedSequence:
    """Deterministic child seed for (experiment seed, index...) tuples.

    Distinct index tuples give statistically independent streams; the same
    tuple always reproduces the same stream regardless of evaluation order,
    which is what makes shard- and thread-count-independent results possible.
    """
    return np.random.SeedSequence((int(seed),) + tuple(int(i) for i in indices))


def _sample_arrival_times(
    family: ProcessFamily, window: float, rng: np.random.Generator
) -> np.ndarray:
    if isinstance(family, PoissonFamily):
        n = rng.poisson(family.rate * window)
        return np.sort(rng.uniform(0.0, window, n))

    if isinstance(family, RenewalFamily):
        if family.law is InterArrivalLaw.DETERMINISTIC:
            d = 1.0 / family.rate
            # Equilibrium delay: first point uniform on (0, d].
            first = d * (1.0 - rng.random())
            if first > window:
                return np.empty(0)
            n = int(math.floor((window - first) / d)) + 1
            return first + d * np.arange(n)
        # Erlang(stages) inter-arrivals, each stage exponential with rate
        # stages * rate.  The equilibrium first point is Erlang with a
        # uniformly random number of remaining stages.
        k = family.stages
        stage_scale = 1.0 / (k * family.rate)
        remaining = int(rng.integers(1, k + 1))
        first = float(np.sum(rng.exponential(stage_scale, remaining)))
        times = []
        t = first
        while t <= window:
            times.append(t)
            t += float(np.sum(rng.exponential(stage_scale, k)))
        return np.asarray(times)

    if isinstance(family, OnOffFamily):
        on = rng.random() < family.stationary_on_probability
        t = 0.0
        pieces: list[np.ndarray] = []
        while t < window:
            hold_rate = family.off_rate if on else family.on_rate
            duration = rng.exponential(1.0 / hold_rate)
            end = min(t + duration, window)
            if on and end > t:
                n = rng.poisson(family.emission_rate * (end - t))
                if n:
                    pieces.append(rng.uniform(t, end, n))
            t = t + duration
            on = not on
        if not pieces:
            return np.empty(0)
        return np.sort(np.concatenate(pieces))

    raise UnsupportedModelError(f"unknown process family {type(family).__name__}")


def sample_path(
    model: TrafficModel,
    window: float,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> MarkedPath:
    """Sample one stationary source path of ``model`` on (0, window]."""
    if window <= 0 or not math.isfinite(window):
        raise ConfigurationError(f"window must be positive and finite, got {window}")
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
    times = _sample_arrival_times(model.family, window, rng)
    # Exclude points landing exactly at 0 (probability zero, but silently
    # guard against boundary rounding) and keep points at the window edge.
    times = times[(times > 0) & (times <= window)]
    marks = model.sample_marks(rng, times.size)
    return MarkedPath(window=window, times=times, marks=marks)


def _sum_iid_marks(model: TrafficModel, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Totals of ``counts[i]`` i.i.d. marks, vectorised over i."""
    m = model.marks
    if isinstance(m, UnitMarks):
        return counts.astype(float)
    if isinstance(m, DeterministicMarks):
        return m.value * counts
    if isinstance(m, ExponentialMarks):
        # A sum of k exponentials of mean mu is Gamma(k) scaled by mu.
        return m.mean * rng.standard_gamma(counts)
    per_value = rng.multinomial(counts, np.asarray(m.probabilities))
    return per_value @ np.asarray(m.values)


def sample_total_work(
    model: TrafficModel,
    window: float,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """``size`` independent samples of the total work arriving in (0, window].

    Equivalent in law to summing the marks of :func:`sample_path`, but
    vectorised: only event counts are sampled, never event times.  For the
    renewal families the counts use the stationary-phase representation (the
    stage-completion process of an Erlang renewal stream is Poisson, and the
    equilibrium phase is uniform over the stages).
    """
    if window <= 0 or not math.isfinite(window):
        raise ConfigurationError(f"window must be positive and finite, got {window}")
    family = model.family
    if isinstance(family, PoissonFamily):
        counts = rng.poisson(family.rate * window, size)
    elif isinstance(family, RenewalFamily):
        if family.law is InterArrivalLaw.DETERMINISTIC:
            d = 1.0 / family.rate
            first = d * (1.0 - rng.random(size))
            counts = np.where(first <= window, np.floor((window - first) / d) + 1, 0.0).astype(
                np.int64
            )
        else:
            k = family.stages
            stages_done = rng.poisson(k * family.rate * window, size)
            phase = rng.integers(1, k + 1, size)
            counts = np.where(stages_done >= phase, (stages_done - phase) // k + 1, 0)
    elif isinstance(family, OnOffFamily):
        on_time = np.empty(size)
        for i in range(size):
            on = rng.random() < family.stationary_on_probability
            t = 0.0
            acc = 0.0
            while t < window:
                hold_rate = family.off_rate if on else family.on_rate
                duration = rng.exponential(1.0 / hold_rate)
                end = min(t + duration, window)
                if on:
                    acc += end - t
                t += duration
                on = not on
            on_time[i] = acc
        counts = rng.poisson(family.emission_rate * on_time)
    else:
        raise UnsupportedModelError(f"unknown process family {type(family).__name__}")
    return _sum_iid_marks(model, np.asarray(counts), rng)


def superpose(paths: list[MarkedPath] | tuple[MarkedPath, ...]) -> MarkedPath:
    """Merge several event streams on a common window into one stream.

    Events are merged in time order with a stable sort, so simultaneous
    events from different streams are kept as distinct events in input order
    (never coalesced into one larger mark).
    """
    if not paths:
        raise ConfigurationError("superpose requires at least one path")
    window = paths[0].window
    for p in paths[1:]:
        if p.window != window:
            raise ConfigurationError("all superposed paths must share the same window")
    times = np.concatenate([p.times for p in paths])
    marks = np.concatenate([p.marks for p in paths])
    order = np.argsort(times, kind="stable")
    return MarkedPath(window=window, times=times[order], marks=marks[order])
