"""Monte Carlo overflow estimation: naive counting, exponentially tilted
importance sampling, and decay regression against the regime speed.

Determinism contract: every replication owns a generator seeded from the
(experiment seed, replication index) pair, so results are bit-identical for
any shard size or thread count — parallelism only changes who executes a
replication, never its random stream.  Merging concatenates per-replication
outputs in index order and applies one fixed-order reduction.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, UnsupportedModelError
from .optimize import minimize_unimodal
from .queue_core import RegimeCase, ScalingRegime, horizon_bound
from .ratefn import omega_star
from .traffic import (
    DeterministicMarks,
    DiscreteMarks,
    ExponentialMarks,
    PoissonFamily,
    TrafficModel,
    UnitMarks,
    derive_seed,
    sample_path,
)
from .variational import DecayPrediction, optimal_tilt

__all__ = [
    "OverflowEstimate",
    "estimate_naive",
    "estimate_is",
    "RegressionFit",
    "decay_regression",
]

_Z95 = 1.959963984540054  # two-sided 95% normal quantile
_SHARD_SIZE = 4096


@dataclass(frozen=True)
class OverflowEstimate:
    """One Monte Carlo estimate of P(workload > N^alpha · B).

    ``hits`` is the raw hit count for the naive estimator and the effective
    sample size (Σw)²/Σw² for the importance-sampled one.  ``horizon_scaled``
    is the simulated window in scaled time; the estimate undershoots the
    infinite-horizon probability by at most ``tail_budget``.
    """

    N: int
    regime: ScalingRegime
    probability: float
    std_error: float
    replications: int
    hits: float
    normalized_log: float | None
    method: str
    tilt_theta: float | None
    horizon_scaled: float
    tail_budget: float
    ci_lower_95: float
    ci_upper_95: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ConfigurationError(f"probability out of range: {self.probability}")
        if self.std_error < 0:
            raise ConfigurationError(f"std_error must be nonnegative: {self.std_error}")

    def to_record(self) -> dict:
        return {
            "N": self.N,
            "case": self.regime.case.value,
            "alpha": self.regime.alpha,
            "beta": self.regime.beta,
            "buffer_B": self.regime.buffer_B,
            "capacity_C": self.regime.capacity_C,
            "method": self.method,
            "probability": self.probability,
            "std_error": self.std_error,
            "ci_lower_95": self.ci_lower_95,
            "ci_upper_95": self.ci_upper_95,
            "replications": self.replications,
            "hits": self.hits,
            "normalized_log": self.normalized_log,
            "tilt_theta": self.tilt_theta,
            "horizon_scaled": self.horizon_scaled,
            "tail_budget": self.tail_budget,
            "speed": self.regime.speed(self.N),
        }


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("MANYSOURCES_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _shard_ranges(replications: int) -> list[tuple[int, int]]:
    return [
        (start, min(start + _SHARD_SIZE, replications))
        for start in range(0, replications, _SHARD_SIZE)
    ]


def _run_sharded(
    kernel: Callable[[int], float],
    replications: int,
    threads: int,
) -> np.ndarray:
    """Per-replication outputs in index order, independent of scheduling."""

    def run_shard(bounds: tuple[int, int]) -> np.ndarray:
        start, stop = bounds
        return np.array([kernel(rep) for rep in range(start, stop)])

    shards = _shard_ranges(replications)
    if threads <= 1 or len(shards) <= 1:
        parts = [run_shard(b) for b in shards]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_shard, shards))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Replication kernels
# ---------------------------------------------------------------------------


def _tilted_mark_sampler(
    model: TrafficModel, theta: float
) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Sampler for the tilted mark law dP̃(y) ∝ e^{θy} dP(y)."""
    m = model.marks
    if isinstance(m, UnitMarks):
        return lambda rng, size: np.ones(size)
    if isinstance(m, DeterministicMarks):
        return lambda rng, size: np.full(size, m.value)
    if isinstance(m, ExponentialMarks):
        if theta >= 1.0 / m.mean:
            raise ConfigurationError(
                f"tilt theta={theta:.6g} is outside the mark transform domain"
            )
        tilted_mean = m.mean / (1.0 - theta * m.mean)
        return lambda rng, size: rng.exponential(tilted_mean, size)
    if isinstance(m, DiscreteMarks):
        values = np.asarray(m.values)
        weights = np.asarray(m.probabilities) * np.exp(theta * values)
        probs = weights / np.sum(weights)
        return lambda rng, size: rng.choice(values, size=size, p=probs)
    raise ConfigurationError(f"unknown mark law {type(m).__name__}")


@dataclass(frozen=True)
class _SimPlan:
    """Frozen per-run constants shared by every replication."""

    model: TrafficModel
    N: int
    window: float  # unscaled simulation window
    drain: float  # total drain rate N·λE[Y] + N^beta·C
    threshold: float  # overflow level N^alpha·B
    tilt_theta: float = 0.0
    tilt_window: float = 0.0  # tilted segment [0, tilt_window], unscaled
    tilted_point_rate: float = 0.0  # aggregate point rate under the tilt
    log_mgf_shift: float = 0.0  # N·λ·w·(M(θ)−1) term of the likelihood ratio
    stop_at_crossing: bool = False  # stop the tilt at the overflow time

    @property
    def is_tilted(self) -> bool:
        return self.tilt_theta != 0.0 and self.tilt_window > 0.0


def _replicate_poisson(plan: _SimPlan, rng: np.random.Generator) -> tuple[float, float]:
    """One replication for Poisson arrivals: (overflow indicator, tilted work).

    The N-source aggregate is itself Poisson with N times the point rate, so
    it is sampled directly.  Under a tilt, the segment [0, w] uses the tilted
    point rate and mark law; the remainder of the window is nominal.
    """
    model, N = plan.model, plan.N
    rate = N * model.point_rate
    w = plan.tilt_window if plan.is_tilted else 0.0
    pieces_t: list[np.ndarray] = []
    pieces_m: list[np.ndarray] = []
    tilted_work = 0.0
    if plan.is_tilted:
        k1 = rng.poisson(plan.tilted_point_rate * w)
        t1 = np.sort(rng.uniform(0.0, w, k1))
        m1 = _tilted_mark_sampler(model, plan.tilt_theta)(rng, k1)
        tilted_work = float(np.sum(m1))
        pieces_t.append(t1)
        pieces_m.append(m1)
    if plan.window > w:
        k2 = rng.poisson(rate * (plan.window - w))
        t2 = np.sort(rng.uniform(w, plan.window, k2))
        m2 = model.sample_marks(rng, k2)
        pieces_t.append(t2)
        pieces_m.append(m2)
    if not pieces_t:
        return 0.0, 0.0
    times = np.concatenate(pieces_t)
    marks = np.concatenate(pieces_m)
    if times.size == 0:
        return 0.0, tilted_work
    stat = np.cumsum(marks) - plan.drain * times
    hit = float(np.max(stat) > plan.threshold)
    return hit, tilted_work


def _replicate_poisson_stopped(plan: _SimPlan, rng: np.random.Generator) -> tuple[float, float]:
    """One replication with the tilt stopped at the boundary crossing.

    Returns (overflow indicator, likelihood ratio).  The tilted segment is
    sampled event by event; if the workload crosses threshold + drain·t
    inside the window, the tilt stops right there and the likelihood ratio
    pays only for [0, τ].  Stopping caps every hit's weight near
    e^{−θ·threshold}, which keeps the effective sample size healthy when the
    overflow burst is only a handful of points: with a fixed-window tilt,
    paths that finish the burst with cheap nominal points just outside the
    window would carry exponentially larger weights.
    """
    model, N = plan.model, plan.N
    theta = plan.tilt_theta
    nominal_rate = N * model.point_rate
    compensator_rate = plan.tilted_point_rate - nominal_rate  # N·λ·(M(θ)−1)
    sampler = _tilted_mark_sampler(model, theta)
    t = 0.0
    work = 0.0
    while True:
        t += rng.exponential(1.0 / plan.tilted_point_rate)
        if t >= plan.tilt_window:
            break
        work += float(sampler(rng, 1)[0])
        if work - plan.drain * t > plan.threshold:
            return 1.0, math.exp(-theta * work + compensator_rate * t)
    # No crossing inside the tilted window: pay for the whole window, then
    # continue nominally over the remaining horizon.
    ratio = math.exp(-theta * work + compensator_rate * plan.tilt_window)
    w = plan.tilt_window
    if plan.window > w:
        k = rng.poisson(nominal_rate * (plan.window - w))
        if k:
            times = np.sort(rng.uniform(w, plan.window, k))
            marks = model.sample_marks(rng, k)
            stat = work + np.cumsum(marks) - plan.drain * times
            if float(np.max(stat)) > plan.threshold:
                return 1.0, ratio
    return 0.0, ratio


def _replicate_superposed(plan: _SimPlan, rng: np.random.Generator) -> tuple[float, float]:
    """One naive replication for dependent-increment families: superpose N sources."""
    times_parts = []
    marks_parts = []
    for _ in range(plan.N):
        path = sample_path(plan.model, plan.window, rng)
        times_parts.append(path.times)
        marks_parts.append(path.marks)
    times = np.concatenate(times_parts)
    marks = np.concatenate(marks_parts)
    if times.size == 0:
        return 0.0, 0.0
    order = np.argsort(times, kind="stable")
    stat = np.cumsum(marks[order]) - plan.drain * times[order]
    return float(np.max(stat) > plan.threshold), 0.0


def _make_plan(
    model: TrafficModel,
    N: int,
    regime: ScalingRegime,
    horizon_scaled: float,
    *,
    tilt_theta: float = 0.0,
    tilt_window_scaled: float = 0.0,
    stop_at_crossing: bool = False,
) -> _SimPlan:
    time_factor = float(N) ** (regime.alpha - regime.beta)
    window = horizon_scaled * time_factor
    drain = N * model.mean_work_rate + float(N) ** regime.beta * regime.capacity_C
    threshold = float(N) ** regime.alpha * regime.buffer_B
    if tilt_theta == 0.0:
        return _SimPlan(model=model, N=N, window=window, drain=drain, threshold=threshold)
    mgf = model.mark_mgf(tilt_theta)
    if math.isinf(mgf):
        raise ConfigurationError(
            f"tilt theta={tilt_theta:.6g} is outside the mark transform domain"
        )
    w = min(tilt_window_scaled * time_factor, window)
    return _SimPlan(
        model=model,
        N=N,
        window=window,
        drain=drain,
        threshold=threshold,
        tilt_theta=tilt_theta,
        tilt_window=w,
        tilted_point_rate=N * model.point_rate * mgf,
        log_mgf_shift=N * model.point_rate * w * (mgf - 1.0),
        stop_at_crossing=stop_at_crossing,
    )


def _validate_common(N: int, replications: int, tail_budget: float) -> None:
    if N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    if replications < 100:
        raise ConfigurationError(
            f"replications must be at least 100 for meaningful error bars, got {replications}"
        )
    if not (0.0 < tail_budget <= 1.0):
        raise ConfigurationError(f"tail_budget must lie in (0, 1], got {tail_budget}")


def _finish(
    *,
    N: int,
    regime: ScalingRegime,
    probability: float,
    std_error: float,
    replications: int,
    hits: float,
    method: str,
    tilt_theta: float | None,
    horizon_scaled: float,
    tail_budget: float,
    ci: tuple[float, float],
) -> OverflowEstimate:
    speed = regime.speed(N)
    if probability > 0.0 and speed > 0.0:
        normalized_log = math.log(probability) / speed
    else:
        normalized_log = None
    return OverflowEstimate(
        N=N,
        regime=regime,
        probability=probability,
        std_error=std_error,
        replications=replications,
        hits=hits,
        normalized_log=normalized_log,
        method=method,
        tilt_theta=tilt_theta,
        horizon_scaled=horizon_scaled,
        tail_budget=tail_budget,
        ci_lower_95=ci[0],
        ci_upper_95=ci[1],
    )


def estimate_naive(
    model: TrafficModel,
    N: int,
    regime: ScalingRegime,
    replications: int,
    seed: int,
    tail_budget: float,
    *,
    threads: int | None = None,
    horizon: float | None = None,
) -> OverflowEstimate:
    """Crude Monte Carlo overflow estimate: fraction of replications in which
    the windowed workload exceeds N^alpha·B.

    The window comes from the certified horizon bound unless ``horizon``
    (scaled time) is supplied — fixing it explicitly is useful for
    common-random-number comparisons across buffer levels.  The probability
    is exactly hits/replications with a binomial standard error; zero hits
    report the rule-of-three upper confidence bound 3/replications.
    """
    _validate_common(N, replications, tail_budget)
    regime.require_classified()
    horizon_scaled = (
        horizon if horizon is not None else horizon_bound(model, N, regime, tail_budget)
    )
    plan = _make_plan(model, N, regime, horizon_scaled)
    poisson = isinstance(model.family, PoissonFamily)

    def kernel(rep: int) -> float:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, rep)))
        if poisson:
            return _replicate_poisson(plan, rng)[0]
        return _replicate_superposed(plan, rng)[0]

    indicators = _run_sharded(kernel, replications, _resolve_threads(threads))
    hits = int(np.sum(indicators))
    p = hits / replications
    se = math.sqrt(p * (1.0 - p) / replications)
    if hits == 0:
        ci = (0.0, 3.0 / replications)
    else:
        ci = (max(0.0, p - _Z95 * se), min(1.0, p + _Z95 * se))
    return _finish(
        N=N,
        regime=regime,
        probability=p,
        std_error=se,
        replications=replications,
        hits=float(hits),
        method="naive",
        tilt_theta=None,
        horizon_scaled=horizon_scaled,
        tail_budget=tail_budget,
        ci=ci,
    )


def _light_load_burst(
    model: TrafficModel, N: int, regime: ScalingRegime
) -> tuple[float, float]:
    """Optimal burst window and tilt for light-load importance sampling.

    Overflow in this regime happens via a short intense burst.  For a burst
    of unscaled length w the cheapest sustained rate is
    y(w) = λE[Y] + N^{beta−1}·C + N^{alpha−1}·B/w, costing N·w·Ω*(y(w)) in
    the exponent; minimising over w fixes the finite-N burst plan.
    Returns (w*, θ*) in unscaled time.
    """
    lam_w = model.mean_work_rate
    base = lam_w + float(N) ** (regime.beta - 1.0) * regime.capacity_C
    boost = float(N) ** (regime.alpha - 1.0) * regime.buffer_B

    def exponent(w: float) -> float:
        return N * w * omega_star(model, base + boost / w)

    guess = boost / base
    result = minimize_unimodal(exponent, lower=0.0, x0=guess, xtol=1e-12)
    w_star = result.x
    theta = optimal_tilt(model, base + boost / w_star)
    return w_star, theta


def estimate_is(
    model: TrafficModel,
    N: int,
    regime: ScalingRegime,
    prediction: DecayPrediction,
    replications: int,
    seed: int,
    tail_budget: float,
    *,
    threads: int | None = None,
    horizon: float | None = None,
) -> OverflowEstimate:
    """Importance-sampled overflow estimate under an exponential tilt.

    The arrival stream is tilted on the initial segment where the optimising
    path climbs — point rate boosted to λM(θ), marks reweighted by
    e^{θy}/M(θ) — and left nominal afterwards; each replication contributes
    its likelihood ratio when the workload overflows, which keeps the
    estimator unbiased.  Only Poisson arrivals support exact tilting.

    The tilt follows ``prediction``: for the small-buffer cases the tilt
    solves the first-order condition at headroom rescaled by N^{beta−1} over
    the climb window τ*; the light-load case derives a finite-N burst window
    and tilt instead (its prediction carries no finite tilt).  A zero tilt
    degenerates exactly to the naive estimator.
    """
    _validate_common(N, replications, tail_budget)
    regime.require_classified()
    if not isinstance(model.family, PoissonFamily):
        raise UnsupportedModelError(
            "exact exponential tilting needs the tilted process to stay in the "
            "same family, which holds for Poisson arrivals only; renewal and "
            "on/off importance sampling is out of scope"
        )
    case = regime.case
    lam_w = model.mean_work_rate
    if case in (RegimeCase.SMALL_BUFFER_LD, RegimeCase.SMALL_BUFFER_MD):
        if prediction.tilt_theta is None or prediction.optimal_duration is None:
            raise ConfigurationError(
                "the prediction carries no tilt; run decay_rate for this regime first"
            )
        target = lam_w + float(N) ** (regime.beta - 1.0) * prediction.optimal_slope
        theta = optimal_tilt(model, target)
        tilt_window_scaled = prediction.optimal_duration
    elif case is RegimeCase.LIGHT_LOAD:
        w_star, theta = _light_load_burst(model, N, regime)
        # Cover crossings a few burst widths past the optimum: the tilt stops
        # paying at the crossing time, so over-coverage costs nothing, while
        # under-coverage would leave late crossings to high-weight nominal
        # completions.
        tilt_window_scaled = 3.0 * w_star * float(N) ** (regime.beta - regime.alpha)
    else:
        raise ConfigurationError(
            f"importance sampling is driven by a collapsing-timescale prediction; "
            f"case {case.value} has none"
        )

    horizon_scaled = (
        horizon if horizon is not None else horizon_bound(model, N, regime, tail_budget)
    )
    # Make sure the simulated window covers the tilted climb.
    horizon_scaled = max(horizon_scaled, 1.02 * tilt_window_scaled)

    if theta == 0.0:
        base = estimate_naive(
            model,
            N,
            regime,
            replications,
            seed,
            tail_budget,
            threads=threads,
            horizon=horizon_scaled,
        )
        ess = base.hits  # unit weights: ESS equals the hit count
        return _finish(
            N=N,
            regime=regime,
            probability=base.probability,
            std_error=base.std_error,
            replications=replications,
            hits=ess,
            method="importance_sampled",
            tilt_theta=0.0,
            horizon_scaled=horizon_scaled,
            tail_budget=tail_budget,
            ci=(base.ci_lower_95, base.ci_upper_95),
        )

    plan = _make_plan(
        model,
        N,
        regime,
        horizon_scaled,
        tilt_theta=theta,
        tilt_window_scaled=tilt_window_scaled,
        stop_at_crossing=case is RegimeCase.LIGHT_LOAD,
    )

    def kernel(rep: int) -> float:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, rep)))
        if plan.stop_at_crossing:
            hit, ratio = _replicate_poisson_stopped(plan, rng)
            return ratio if hit else 0.0
        hit, tilted_work = _replicate_poisson(plan, rng)
        if hit == 0.0:
            return 0.0
        log_ratio = -plan.tilt_theta * tilted_work + plan.log_mgf_shift
        return math.exp(log_ratio)

    weights = _run_sharded(kernel, replications, _resolve_threads(threads))
    p = float(np.mean(weights))
    se = float(np.std(weights, ddof=1)) / math.sqrt(replications)
    sum_w = float(np.sum(weights))
    sum_w2 = float(np.sum(weights**2))
    ess = (sum_w * sum_w / sum_w2) if sum_w2 > 0 else 0.0
    ci = (max(0.0, p - _Z95 * se), min(1.0, p + _Z95 * se))
    return _finish(
        N=N,
        regime=regime,
        probability=min(1.0, p),
        std_error=se,
        replications=replications,
        hits=ess,
        method="importance_sampled",
        tilt_theta=theta,
        horizon_scaled=horizon_scaled,
        tail_budget=tail_budget,
        ci=ci,
    )


class RegressionFit(NamedTuple):
    """OLS fit of −log(probability) against the regime speed f(N)."""

    fitted_decay: float
    intercept: float
    r_squared: float


def decay_regression(
    estimates: Sequence[OverflowEstimate],
    regime: ScalingRegime,
) -> RegressionFit:
    """Fit −log(probability) = decay·f(N) + const across an N sweep.

    Zero-probability estimates cannot contribute a log and are dropped with a
    warning; at least four usable points are required.
    """
    usable: list[OverflowEstimate] = []
    for est in estimates:
        if est.regime != regime:
            raise ConfigurationError(
                f"estimate at N={est.N} was produced under a different regime "
                f"({est.regime.case.value}); all estimates must share one regime"
            )
        if est.probability > 0.0:
            usable.append(est)
        else:
            warnings.warn(
                f"dropping N={est.N}: zero estimated probability has no log",
                stacklevel=2,
            )
    if len(usable) < 4:
        raise InsufficientDataError(
            f"decay regression needs at least 4 estimates with positive "
            f"probability, got {len(usable)}"
        )
    x = np.array([regime.speed(est.N) for est in usable])
    y = np.array([-math.log(est.probability) for est in usable])
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - (slope * x + intercept)
    total = y - np.mean(y)
    ss_tot = float(np.dot(total, total))
    r_squared = 1.0 - float(np.dot(residuals, residuals)) / ss_tot if ss_tot > 0 else 1.0
    return RegressionFit(float(slope), float(intercept), float(r_squared))
