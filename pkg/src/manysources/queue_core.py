"""Queueing layer: scaling regimes, stationary workload, the queueing map,
path scaling, polygonal interpolation, and the certified simulation horizon.

The system has N statistically identical sources feeding one server.  The
buffer threshold grows like ``N^alpha * B`` and the service rate is the mean
load plus headroom ``N^beta * C``.  The pair (alpha, beta) selects an
asymptotic regime, each with its own speed function f(N); overflow
probabilities decay like exp(−f(N)·rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, NumericInstabilityError, UnsupportedModelError
from .paths import PiecewiseLinearPath, StepPath
from .ratefn import CgfEvaluator, MonteCarloCgf, psi
from .traffic import MarkedPath, TrafficModel

__all__ = [
    "RegimeCase",
    "ScalingRegime",
    "classify_case",
    "loynes_queue",
    "queueing_map",
    "scale_path",
    "polygonal",
    "horizon_bound",
]


class RegimeCase(str, Enum):
    """The five asymptotic cases selected by the buffer/capacity exponents."""

    ORIGINAL_LD = "original_ld"
    SMALL_BUFFER_LD = "small_buffer_ld"
    ORIGINAL_MD = "original_md"
    SMALL_BUFFER_MD = "small_buffer_md"
    LIGHT_LOAD = "light_load"
    UNCLASSIFIED = "unclassified"


_CASE_RULES = (
    "original_ld: alpha = beta = 1; "
    "small_buffer_ld: 0 < alpha < beta = 1; "
    "original_md: 1/2 < alpha = beta < 1; "
    "small_buffer_md: alpha < beta < 1 and alpha + beta > 1; "
    "light_load: 0 < alpha < 1 and beta > 1"
)


def classify_case(alpha: float, beta: float) -> RegimeCase:
    """Map buffer/capacity exponents to their asymptotic case."""
    if alpha <= 0 or beta <= 0:
        raise ConfigurationError(f"exponents must be positive, got alpha={alpha}, beta={beta}")
    if alpha == 1.0 and beta == 1.0:
        return RegimeCase.ORIGINAL_LD
    if 0.0 < alpha < 1.0 and beta == 1.0:
        return RegimeCase.SMALL_BUFFER_LD
    if 0.5 < alpha < 1.0 and alpha == beta:
        return RegimeCase.ORIGINAL_MD
    if alpha < beta < 1.0 and alpha + beta > 1.0:
        return RegimeCase.SMALL_BUFFER_MD
    if 0.0 < alpha < 1.0 and beta > 1.0:
        return RegimeCase.LIGHT_LOAD
    return RegimeCase.UNCLASSIFIED


@dataclass(frozen=True)
class ScalingRegime:
    """Buffer/capacity scaling: threshold N^alpha·B, headroom N^beta·C."""

    alpha: float
    beta: float
    buffer_B: float = 1.0
    capacity_C: float = 1.0
    case: RegimeCase = field(init=False)

    def __post_init__(self) -> None:
        # A zero buffer (threshold at 0, P(Q > 0)) is a legal degenerate
        # sanity configuration; only negative values are rejected.
        if self.buffer_B < 0 or self.capacity_C <= 0:
            raise ConfigurationError(
                f"buffer_B must be nonnegative and capacity_C positive, got "
                f"{self.buffer_B} and {self.capacity_C}"
            )
        object.__setattr__(self, "case", classify_case(self.alpha, self.beta))

    def require_classified(self) -> None:
        if self.case is RegimeCase.UNCLASSIFIED:
            raise UnsupportedModelError(
                f"(alpha={self.alpha}, beta={self.beta}) matches none of the five "
                f"supported cases ({_CASE_RULES})"
            )

    def speed(self, N: int | float) -> float:
        """Decay speed f(N) of the regime's asymptotic.

        At N=1 every power speed equals 1 and the light-load speed
        N^alpha·log N equals 0 (callers treating f(N) as a normaliser must
        guard against that zero).
        """
        self.require_classified()
        if N < 1:
            raise ConfigurationError(f"N must be at least 1, got {N}")
        case = self.case
        if case is RegimeCase.ORIGINAL_LD:
            return float(N)
        if case is RegimeCase.SMALL_BUFFER_LD:
            return float(N) ** self.alpha
        if case is RegimeCase.ORIGINAL_MD:
            return float(N) ** (2.0 * self.alpha - 1.0)
        if case is RegimeCase.SMALL_BUFFER_MD:
            return float(N) ** (self.alpha + self.beta - 1.0)
        return float(N) ** self.alpha * math.log(N)

    @property
    def speed_label(self) -> str:
        self.require_classified()
        case = self.case
        if case is RegimeCase.ORIGINAL_LD:
            return "N"
        if case is RegimeCase.SMALL_BUFFER_LD:
            return f"N^{self.alpha:g}"
        if case is RegimeCase.ORIGINAL_MD:
            return f"N^{2 * self.alpha - 1:g}"
        if case is RegimeCase.SMALL_BUFFER_MD:
            return f"N^{self.alpha + self.beta - 1:g}"
        return f"N^{self.alpha:g}*log(N)"


def loynes_queue(
    aggregate: MarkedPath,
    N: int,
    regime: ScalingRegime,
    lambda_mean_work: float,
) -> float:
    """Stationary workload: sup over the window of arrivals minus drain.

    The drain rate is ``N·lambda_mean_work + N^beta·capacity_C`` (mean work
    rate of all N sources plus headroom).  Between events the statistic
    decreases, so the supremum is attained at an event time (or at 0).
    """
    if N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if lambda_mean_work <= 0:
        raise ConfigurationError(f"lambda_mean_work must be positive, got {lambda_mean_work}")
    drain = N * lambda_mean_work + float(N) ** regime.beta * regime.capacity_C
    if aggregate.n_events == 0:
        return 0.0
    stat = np.cumsum(aggregate.marks) - drain * aggregate.times
    return float(max(0.0, np.max(stat)))


def queueing_map(path: StepPath | PiecewiseLinearPath, capacity: float) -> float:
    """The queueing map f_C(x) = sup over t > 0 of x(t) − C·t on the window.

    For step paths the candidates are the post-jump values and the window
    end; for piecewise-linear paths, the breakpoints.  The supremum is at
    least 0 because x(t) − C·t → 0 as t → 0.
    """
    if capacity <= 0:
        raise ConfigurationError(f"capacity must be positive, got {capacity}")
    if isinstance(path, PiecewiseLinearPath):
        return float(np.max(path.values - capacity * path.breakpoints))
    if isinstance(path, StepPath):
        best = max(0.0, float(path.value(path.window)) - capacity * path.window)
        if path.n_jumps:
            candidates = path.post_jump_values() - capacity * path.times
            best = max(best, float(np.max(candidates)))
        return best
    raise ConfigurationError(f"unsupported path type {type(path).__name__}")


def scale_path(
    aggregate: MarkedPath,
    N: int,
    regime: ScalingRegime,
    model: TrafficModel,
    *,
    target_window: float | None = None,
) -> StepPath:
    """Centre and rescale an aggregate into regime coordinates.

    Output: t' ↦ A(0, N^{alpha−beta} t') / N^alpha − N^{1−beta}·λE[Y]·t',
    represented exactly as scaled jumps on a drift line.  Time dilates by
    N^{beta−alpha}, space contracts by N^alpha, and the mean load becomes a
    drift of slope −N^{1−beta}·λE[Y].  Overflow of the original workload
    above N^alpha·B is equivalent to the queueing map of this path exceeding
    B — an exact algebraic identity, preserved per realization.
    """
    if N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    time_factor = float(N) ** (regime.beta - regime.alpha)
    if target_window is not None:
        required = target_window / time_factor
        if aggregate.window < required * (1.0 - 1e-12):
            raise ConfigurationError(
                f"aggregate window {aggregate.window:.6g} is too short: a scaled window "
                f"of {target_window:.6g} needs an unscaled window of {required:.6g}"
            )
    space_factor = float(N) ** regime.alpha
    drift = -float(N) ** (1.0 - regime.beta) * model.mean_work_rate
    return StepPath(
        window=aggregate.window * time_factor,
        times=aggregate.times * time_factor,
        jumps=aggregate.marks / space_factor,
        drift=drift,
    )


def polygonal(path: StepPath) -> PiecewiseLinearPath:
    """Linear interpolation of a step path through its post-jump values.

    Each mark is accrued linearly over the interval leading up to its jump
    time, so the output agrees with the step path exactly at all jump times
    (post-jump) and accumulates the drift exactly everywhere.  The window end
    acts as the final node when no jump lands exactly there.
    """
    nodes = [0.0]
    values = [0.0]
    if path.n_jumps:
        nodes.extend(path.times.tolist())
        values.extend(path.post_jump_values().tolist())
    if not path.n_jumps or path.times[-1] < path.window:
        nodes.append(path.window)
        values.append(float(path.value(path.window)))
    return PiecewiseLinearPath(np.asarray(nodes), np.asarray(values))


def horizon_bound(
    model: TrafficModel,
    N: int,
    regime: ScalingRegime,
    tail_budget: float,
    *,
    lattice_fraction: float = 0.5,
    evaluator: CgfEvaluator | None = None,
    probe_factors: tuple[float, ...] = (1.0, 4.0, 16.0, 64.0, 256.0),
    mc_samples: int = 50_000,
    mc_seed: int = 0,
) -> float:
    """Scaled simulation window with a certified overflow-tail bound.

    Overflow beyond the returned window is bounded by a lattice Chernoff
    sum: scaled time is cut into cells of width ``s = lattice_fraction·B/C``;
    the chance that the workload first crosses the threshold inside cell
    ``l`` is bounded using the exponent N·u·Ψ(x∞, u) at the cell's right
    endpoint u (unscaled), where x∞ = λE[Y] + N^{beta−1}·C is the per-source
    drain rate.  For Poisson arrivals Ψ(x∞, ·) is constant in u, the sum is
    geometric and the smallest admissible number of cells L has a closed
    form; otherwise Ψ is probed by Monte Carlo on a geometric grid of
    horizons and its minimum is used, which keeps the sum geometric.

    Returns ``s·L``, the smallest lattice multiple whose beyond-window sum is
    at most ``tail_budget``.
    """
    if not (0.0 < tail_budget <= 1.0):
        raise ConfigurationError(f"tail_budget must lie in (0, 1], got {tail_budget}")
    if not (0.0 < lattice_fraction < 1.0):
        raise ConfigurationError(f"lattice_fraction must lie in (0, 1), got {lattice_fraction}")
    if N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    regime.require_classified()
    if regime.buffer_B <= 0:
        raise ConfigurationError(
            "the horizon lattice is proportional to the buffer level and needs "
            "buffer_B > 0; pass an explicit horizon for zero-threshold runs"
        )

    s = lattice_fraction * regime.buffer_B / regime.capacity_C  # scaled cell width
    cell = float(N) ** (regime.alpha - regime.beta) * s  # unscaled cell width
    x_inf = model.mean_work_rate + float(N) ** (regime.beta - 1.0) * regime.capacity_C

    if model.is_poisson and evaluator is None:
        psi_floor = psi(model, x_inf, 1.0, mode="analytic")
    else:
        ev = (
            evaluator
            if evaluator is not None
            else MonteCarloCgf(model, samples=mc_samples, seed=mc_seed)
        )
        values = []
        for factor in probe_factors:
            try:
                values.append(psi(model, x_inf, cell * factor, evaluator=ev))
            except NumericInstabilityError as exc:
                raise NumericInstabilityError(
                    f"horizon probing failed at u={cell * factor:.6g}: {exc}; "
                    "probe larger horizons or raise the sample count"
                ) from exc
        psi_floor = min(values)
    if not (psi_floor > 0.0) or not math.isfinite(psi_floor):
        raise NumericInstabilityError(
            f"the tail exponent estimate is not positive (got {psi_floor:.6g} at "
            f"rate {x_inf:.6g}); probe larger horizons — the growth assumption may "
            "fail numerically for this model"
        )

    if tail_budget >= 1.0:
        return s  # any probability satisfies the bound; minimal window

    exponent = N * cell * psi_floor
    # Beyond a window of L cells, the sum over cells l >= L of r^(l+1) is
    # r^(L+1) / (1 - r) with r = exp(-exponent); solve for the smallest L
    # in log space so tiny exponents cannot underflow.
    one_minus_r = -math.expm1(-exponent)
    if one_minus_r <= 0.0:
        raise NumericInstabilityError(
            "the per-cell exponent underflows; the geometric tail cannot contract"
        )
    needed = (-math.log(tail_budget) - math.log(one_minus_r)) / exponent - 1.0
    L = max(1, math.ceil(needed))
    return s * L
