"""Tests for the Monte Carlo overflow estimators and the decay regression.

Key properties exercised:
- determinism: per-replication seeding makes results bit-identical across
  thread counts, and hit counts prefix-consistent across replication counts;
- exactness: the naive probability is hits/replications, zero hits report
  the rule-of-three bound, a zero tilt reduces importance sampling to the
  naive estimator exactly;
- unbiasedness: tilted estimates agree with naive ones within combined
  standard errors on moderately rare events (both the windowed tilt and the
  stopped-at-crossing light-load kernel);
- regression: ordinary least squares against the regime speed, checked
  against numpy.polyfit on synthetic data.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from manysources.errors import (
    ConfigurationError,
    InsufficientDataError,
    UnsupportedModelError,
)
from manysources.estimate import (
    OverflowEstimate,
    RegressionFit,
    decay_regression,
    estimate_is,
    estimate_naive,
)
from manysources.queue_core import ScalingRegime, horizon_bound
from manysources.traffic import (
    InterArrivalLaw,
    PoissonFamily,
    RenewalFamily,
    TrafficModel,
    UnitMarks,
)
from manysources.variational import DecayPrediction, PredictionMethod, decay_rate

UNIT_POISSON = TrafficModel(PoissonFamily(1.0), UnitMarks())
SB_LD = ScalingRegime(alpha=0.5, beta=1.0, buffer_B=1.0, capacity_C=1.0)
LIGHT_LOAD = ScalingRegime(alpha=0.5, beta=2.0, buffer_B=0.2, capacity_C=0.25)


def _synthetic_estimate(
    N: int, regime: ScalingRegime, probability: float
) -> OverflowEstimate:
    return OverflowEstimate(
        N=N,
        regime=regime,
        probability=probability,
        std_error=probability / 10.0,
        replications=10_000,
        hits=probability * 10_000,
        normalized_log=math.log(probability) / regime.speed(N) if probability else None,
        method="naive",
        tilt_theta=None,
        horizon_scaled=5.0,
        tail_budget=1e-9,
        ci_lower_95=probability * 0.9,
        ci_upper_95=min(1.0, probability * 1.1),
    )


class TestValidation:
    def test_replication_floor(self) -> None:
        with pytest.raises(ConfigurationError, match="at least 100"):
            estimate_naive(UNIT_POISSON, 8, SB_LD, 99, 0, 1e-9)

    @pytest.mark.parametrize("budget", [0.0, -0.1, 1.5])
    def test_tail_budget_range(self, budget: float) -> None:
        with pytest.raises(ConfigurationError):
            estimate_naive(UNIT_POISSON, 8, SB_LD, 1000, 0, budget)

    def test_positive_n(self) -> None:
        with pytest.raises(ConfigurationError):
            estimate_naive(UNIT_POISSON, 0, SB_LD, 1000, 0, 1e-9)

    def test_unclassified_regime_rejected(self) -> None:
        regime = ScalingRegime(alpha=0.5, beta=0.5, buffer_B=1.0, capacity_C=1.0)
        with pytest.raises(UnsupportedModelError):
            estimate_naive(UNIT_POISSON, 8, regime, 1000, 0, 1e-9)

    def test_tilting_needs_poisson_arrivals(self) -> None:
        renewal = TrafficModel(
            RenewalFamily(rate=1.0, law=InterArrivalLaw.ERLANG, stages=2), UnitMarks()
        )
        pred = decay_rate(SB_LD, UNIT_POISSON)
        with pytest.raises(UnsupportedModelError):
            estimate_is(renewal, 8, SB_LD, pred, 1000, 0, 1e-9)

    def test_tilting_needs_collapsing_timescale_case(self) -> None:
        original = ScalingRegime(alpha=1.0, beta=1.0, buffer_B=1.0, capacity_C=1.0)
        pred = decay_rate(SB_LD, UNIT_POISSON)
        with pytest.raises(ConfigurationError, match="collapsing-timescale"):
            estimate_is(UNIT_POISSON, 8, original, pred, 1000, 0, 1e-9)

    def test_tiltless_prediction_rejected(self) -> None:
        light = decay_rate(LIGHT_LOAD, UNIT_POISSON)  # carries no finite tilt
        with pytest.raises(ConfigurationError, match="no tilt"):
            estimate_is(UNIT_POISSON, 8, SB_LD, light, 1000, 0, 1e-9)


class TestDeterminism:
    def test_naive_bit_identical_reruns(self) -> None:
        a = estimate_naive(UNIT_POISSON, 8, SB_LD, 2000, seed=5, tail_budget=1e-9)
        b = estimate_naive(UNIT_POISSON, 8, SB_LD, 2000, seed=5, tail_budget=1e-9)
        assert a == b

    def test_naive_thread_count_invariant(self) -> None:
        kwargs = dict(replications=3000, seed=3, tail_budget=1e-9)
        one = estimate_naive(UNIT_POISSON, 8, SB_LD, threads=1, **kwargs)
        four = estimate_naive(UNIT_POISSON, 8, SB_LD, threads=4, **kwargs)
        assert one == four

    def test_tilted_thread_count_invariant(self) -> None:
        pred = decay_rate(SB_LD, UNIT_POISSON)
        kwargs = dict(replications=2000, seed=3, tail_budget=1e-9)
        one = estimate_is(UNIT_POISSON, 8, SB_LD, pred, threads=1, **kwargs)
        four = estimate_is(UNIT_POISSON, 8, SB_LD, pred, threads=4, **kwargs)
        assert one.probability == four.probability
        assert one.std_error == four.std_error
        assert one.hits == four.hits

    def test_stopped_kernel_thread_count_invariant(self) -> None:
        pred = decay_rate(LIGHT_LOAD, UNIT_POISSON)
        kwargs = dict(replications=2000, seed=3, tail_budget=1e-9)
        one = estimate_is(UNIT_POISSON, 8, LIGHT_LOAD, pred, threads=1, **kwargs)
        four = estimate_is(UNIT_POISSON, 8, LIGHT_LOAD, pred, threads=4, **kwargs)
        assert one.probability == four.probability
        assert one.hits == four.hits

    def test_seed_changes_the_estimate(self) -> None:
        a = estimate_naive(UNIT_POISSON, 8, SB_LD, 2000, seed=1, tail_budget=1e-9)
        b = estimate_naive(UNIT_POISSON, 8, SB_LD, 2000, seed=2, tail_budget=1e-9)
        assert a.probability != b.probability

    def test_hit_counts_prefix_consistent_across_shard_boundary(self) -> None:
        """Replication i's stream depends only on (seed, i), so adding one
        replication can change the hit count by at most one."""
        horizon = 4.0
        counts = {}
        for reps in (4095, 4096, 4097):
            est = estimate_naive(
                UNIT_POISSON, 4, SB_LD, reps, seed=7, tail_budget=1e-9, horizon=horizon
            )
            counts[reps] = est.hits
        assert counts[4096] - counts[4095] in (0.0, 1.0)
        assert counts[4097] - counts[4096] in (0.0, 1.0)


class TestNaiveEstimator:
    def test_probability_is_exactly_hit_fraction(self) -> None:
        est = estimate_naive(UNIT_POISSON, 8, SB_LD, 2000, seed=5, tail_budget=1e-9)
        assert est.hits == int(est.hits)
        assert est.probability == est.hits / 2000
        p = est.probability
        assert est.std_error == pytest.approx(math.sqrt(p * (1 - p) / 2000), rel=1e-12)
        assert est.method == "naive"
        assert est.tilt_theta is None

    def test_zero_hits_report_rule_of_three(self) -> None:
        # buffer far beyond reach of 200 draws
        rare = ScalingRegime(alpha=0.5, beta=1.0, buffer_B=50.0, capacity_C=1.0)
        est = estimate_naive(UNIT_POISSON, 16, rare, 200, seed=0, tail_budget=1e-6)
        assert est.probability == 0.0
        assert est.hits == 0.0
        assert est.ci_lower_95 == 0.0
        assert est.ci_upper_95 == pytest.approx(3.0 / 200)
        assert est.normalized_log is None

    def test_normalized_log_uses_regime_speed(self) -> None:
        est = estimate_naive(UNIT_POISSON, 16, SB_LD, 20_000, seed=11, tail_budget=1e-9)
        assert est.probability > 0
        assert est.normalized_log == pytest.approx(
            math.log(est.probability) / SB_LD.speed(16), rel=1e-12
        )

    def test_common_random_numbers_make_hits_monotone_in_buffer(self) -> None:
        """Same seed and same explicit horizon give identical paths, so a
        higher buffer can only lose hits."""
        horizon = 6.0
        hits = []
        for buffer_B in (0.5, 1.0, 1.5, 2.0):
            regime = ScalingRegime(alpha=0.5, beta=1.0, buffer_B=buffer_B, capacity_C=1.0)
            est = estimate_naive(
                UNIT_POISSON, 16, regime, 4000, seed=9, tail_budget=1e-9, horizon=horizon
            )
            hits.append(est.hits)
        assert hits == sorted(hits, reverse=True)
        assert hits[0] > hits[-1]  # the sweep actually spans rarity levels

    def test_record_fields(self) -> None:
        est = estimate_naive(UNIT_POISSON, 8, SB_LD, 1000, seed=5, tail_budget=1e-9)
        record = est.to_record()
        assert record["method"] == "naive"
        assert record["N"] == 8
        assert record["speed"] == pytest.approx(SB_LD.speed(8))
        assert record["probability"] == est.probability


class TestImportanceSampling:
    def test_agrees_with_naive_on_moderate_rarity(self) -> None:
        pred = decay_rate(SB_LD, UNIT_POISSON)
        naive = estimate_naive(UNIT_POISSON, 16, SB_LD, 20_000, seed=11, tail_budget=1e-9)
        tilted = estimate_is(UNIT_POISSON, 16, SB_LD, pred, 20_000, seed=11, tail_budget=1e-9)
        assert naive.hits >= 20  # the event is visible to the naive estimator
        combined = math.hypot(naive.std_error, tilted.std_error)
        assert abs(naive.probability - tilted.probability) < 4.0 * combined
        # the tilt concentrates effort on the event: better precision
        assert tilted.std_error < naive.std_error

    @pytest.mark.parametrize("N", [8, 16])
    def test_stopped_kernel_agrees_with_naive(self, N: int) -> None:
        pred = decay_rate(LIGHT_LOAD, UNIT_POISSON)
        naive = estimate_naive(UNIT_POISSON, N, LIGHT_LOAD, 20_000, seed=11, tail_budget=1e-9)
        tilted = estimate_is(UNIT_POISSON, N, LIGHT_LOAD, pred, 20_000, seed=11, tail_budget=1e-9)
        combined = math.hypot(naive.std_error, tilted.std_error)
        assert abs(naive.probability - tilted.probability) < 4.0 * combined

    def test_effective_sample_size_bounded_by_replications(self) -> None:
        pred = decay_rate(SB_LD, UNIT_POISSON)
        est = estimate_is(UNIT_POISSON, 16, SB_LD, pred, 5000, seed=2, tail_budget=1e-9)
        assert 0.0 < est.hits <= 5000.0
        assert est.method == "importance_sampled"
        assert est.tilt_theta is not None and est.tilt_theta > 0

    def test_zero_tilt_degenerates_to_naive_exactly(self) -> None:
        prediction = DecayPrediction(
            regime=SB_LD,
            decay_rate=1.0,
            optimal_duration=0.5,
            optimal_slope=0.0,  # tilt target = mean rate → θ* = 0
            tilt_theta=0.0,
            method=PredictionMethod.LINE_SEARCH,
        )
        tilted = estimate_is(UNIT_POISSON, 16, SB_LD, prediction, 3000, seed=4, tail_budget=1e-9)
        hb = horizon_bound(UNIT_POISSON, 16, SB_LD, 1e-9)
        horizon = max(hb, 1.02 * 0.5)
        naive = estimate_naive(
            UNIT_POISSON, 16, SB_LD, 3000, seed=4, tail_budget=1e-9, horizon=horizon
        )
        assert tilted.probability == naive.probability
        assert tilted.std_error == naive.std_error
        assert tilted.hits == naive.hits  # unit weights: ESS is the hit count
        assert tilted.method == "importance_sampled"
        assert tilted.tilt_theta == 0.0

    def test_horizon_extension_covers_tail_mass(self) -> None:
        """Tightening the tail budget lengthens the window; the probability
        may only grow by at most the looser budget (plus noise)."""
        loose = estimate_naive(UNIT_POISSON, 8, LIGHT_LOAD, 20_000, seed=3, tail_budget=1e-2)
        tight = estimate_naive(UNIT_POISSON, 8, LIGHT_LOAD, 20_000, seed=3, tail_budget=1e-8)
        assert tight.horizon_scaled > loose.horizon_scaled
        combined = math.hypot(loose.std_error, tight.std_error)
        assert tight.probability >= loose.probability - 4.0 * combined
        assert tight.probability - loose.probability <= 1e-2 + 4.0 * combined


class TestDecayRegression:
    def test_exact_synthetic_fit(self) -> None:
        decay, const = 1.3, 0.7
        estimates = [
            _synthetic_estimate(N, SB_LD, math.exp(-decay * SB_LD.speed(N) - const))
            for N in (16, 64, 256, 1024)
        ]
        fit = decay_regression(estimates, SB_LD)
        assert fit.fitted_decay == pytest.approx(decay, rel=1e-10)
        assert fit.intercept == pytest.approx(const, rel=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_matches_polyfit_on_noisy_data(self) -> None:
        decay, const = 0.9, 0.2
        noise = [0.03, -0.05, 0.02, -0.01, 0.04]
        ns = (16, 64, 256, 1024, 4096)
        estimates = [
            _synthetic_estimate(N, SB_LD, math.exp(-decay * SB_LD.speed(N) - const + e))
            for N, e in zip(ns, noise)
        ]
        fit = decay_regression(estimates, SB_LD)
        x = np.array([SB_LD.speed(N) for N in ns])
        y = np.array([decay * SB_LD.speed(N) + const - e for N, e in zip(ns, noise)])
        slope, intercept = np.polyfit(x, y, 1)
        assert fit.fitted_decay == pytest.approx(slope, rel=1e-9)
        assert fit.intercept == pytest.approx(intercept, rel=1e-9)
        assert 0.99 < fit.r_squared < 1.0

    def test_needs_four_positive_points(self) -> None:
        estimates = [
            _synthetic_estimate(N, SB_LD, math.exp(-SB_LD.speed(N))) for N in (16, 64, 256)
        ]
        with pytest.raises(InsufficientDataError):
            decay_regression(estimates, SB_LD)

    def test_zero_probability_points_dropped_with_warning(self) -> None:
        good = [
            _synthetic_estimate(N, SB_LD, math.exp(-SB_LD.speed(N)))
            for N in (16, 64, 256, 1024)
        ]
        dead = _synthetic_estimate(4096, SB_LD, 0.0)
        with pytest.warns(UserWarning, match="zero estimated probability"):
            fit = decay_regression(good + [dead], SB_LD)
        clean = decay_regression(good, SB_LD)
        assert fit == clean

    def test_zero_probability_drop_can_leave_too_few(self) -> None:
        good = [
            _synthetic_estimate(N, SB_LD, math.exp(-SB_LD.speed(N))) for N in (16, 64, 256)
        ]
        dead = _synthetic_estimate(1024, SB_LD, 0.0)
        with pytest.warns(UserWarning), pytest.raises(InsufficientDataError):
            decay_regression(good + [dead], SB_LD)

    def test_regime_mismatch_rejected(self) -> None:
        other = ScalingRegime(alpha=0.5, beta=1.0, buffer_B=2.0, capacity_C=1.0)
        estimates = [
            _synthetic_estimate(N, SB_LD, math.exp(-SB_LD.speed(N)))
            for N in (16, 64, 256)
        ] + [_synthetic_estimate(1024, other, 0.01)]
        with pytest.raises(ConfigurationError, match="different regime"):
            decay_regression(estimates, SB_LD)

    def test_fit_is_a_named_tuple(self) -> None:
        estimates = [
            _synthetic_estimate(N, SB_LD, math.exp(-SB_LD.speed(N)))
            for N in (16, 64, 256, 1024)
        ]
        fit = decay_regression(estimates, SB_LD)
        assert isinstance(fit, RegressionFit)
        assert fit._fields == ("fitted_decay", "intercept", "r_squared")


class TestEstimateValidationOfResults:
    def test_probability_must_be_in_unit_interval(self) -> None:
        with pytest.raises(ConfigurationError):
            _synthetic_estimate(8, SB_LD, 1.5)

    def test_negative_std_error_rejected(self) -> None:
        base = _synthetic_estimate(8, SB_LD, 0.5)
        with pytest.raises(ConfigurationError):
            OverflowEstimate(
                **{**{f: getattr(base, f) for f in base.__dataclass_fields__}, "std_error": -1.0}
            )
