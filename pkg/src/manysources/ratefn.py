"""Convex-analysis layer: cumulant generating functions, Legendre transforms,
asymptotic-assumption diagnostics, and the regime rate functionals.

The central objects are

* ``Λ_t(θ)`` — the log moment generating function of the work ``A(0,t)``
  arriving in a window of length ``t`` (exact for Poisson arrivals, Monte
  Carlo otherwise),
* ``Ψ(x,t) = sup_θ [θx − Λ_t(θ)/t]`` — the per-unit-time Legendre transform,
* ``Ω*(y) = sup_θ [θy − λ(M(θ)−1)]`` — the short-time (instantaneous) limit
  of ``Ψ``, where ``M`` is the mark transform and ``λ`` the point rate,

plus the rate functionals each scaling regime induces on piecewise-linear
paths and finite partitions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, NumericInstabilityError, UnsupportedModelError
from .optimize import maximize_unimodal
from .paths import Partition, PiecewiseLinearPath
from .traffic import TrafficModel, derive_seed, sample_path, sample_total_work

__all__ = [
    "CgfEvaluator",
    "AnalyticCgf",
    "MonteCarloCgf",
    "log_mgf_arrivals",
    "psi",
    "omega_star",
    "ProbeGrid",
    "Verdict",
    "AssumptionCheck",
    "DiagnosticsReport",
    "assumption_diagnostics",
    "CovarianceGrid",
    "covariance_grid",
    "rate_small_buffer_ld",
    "rate_small_buffer_md",
    "LightLoadReading",
    "rate_light_load",
    "rate_rkhs",
    "rate_original_ld_partition",
]

_EXP_OVERFLOW = 700.0  # exp() argument beyond which float64 overflows


# ---------------------------------------------------------------------------
# Cumulant generating function evaluators
# ---------------------------------------------------------------------------


class CgfEvaluator(Protocol):
    """Evaluates the log moment generating function of A(0,t)."""

    def log_mgf(self, theta: float, t: float) -> float: ...

    @property
    def theta_sup(self) -> float:
        """Supremum of exponents with a finite transform."""
        ...


@dataclass(frozen=True)
class AnalyticCgf:
    """Exact CGF for Poisson arrivals: Λ_t(θ) = λ t (M(θ) − 1)."""

    model: TrafficModel

    def __post_init__(self) -> None:
        if not self.model.is_poisson:
            raise UnsupportedModelError(
                "analytic log-MGF is exact only for Poisson arrivals; "
                "use the Monte Carlo evaluator for renewal or on/off families"
            )

    @property
    def theta_sup(self) -> float:
        return self.model.mark_mgf_domain_sup

    def log_mgf(self, theta: float, t: float) -> float:
        m = self.model.mark_mgf(theta)
        if math.isinf(m):
            return math.inf
        return self.model.point_rate * t * (m - 1.0)


class MonteCarloCgf:
    """Monte Carlo CGF: log of the empirical mean of exp(θ A(0,t)).

    Samples of A(0,t) are drawn once per window length and cached, so every
    exponent θ is evaluated on the same draws (common random numbers).  This
    makes the estimated CGF exactly convex in θ, hence the Legendre objective
    exactly concave — safe for bracketing line search.
    """

    def __init__(self, model: TrafficModel, samples: int = 100_000, seed: int = 0) -> None:
        if samples < 2:
            raise ConfigurationError(f"need at least 2 samples, got {samples}")
        self.model = model
        self.samples = int(samples)
        self.seed = int(seed)
        self._rng = np.random.Generator(np.random.PCG64(derive_seed(seed)))
        self._totals: dict[float, np.ndarray] = {}

    @property
    def theta_sup(self) -> float:
        return math.inf

    def totals(self, t: float) -> np.ndarray:
        """Cached samples of A(0,t)."""
        key = float(t)
        if key not in self._totals:
            self._totals[key] = sample_total_work(self.model, key, self._rng, self.samples)
        return self._totals[key]

    def log_mgf(self, theta: float, t: float, *, check_overflow: bool = False) -> float:
        return self.log_mgf_with_error(theta, t, check_overflow=check_overflow)[0]

    def log_mgf_with_error(
        self, theta: float, t: float, *, check_overflow: bool = True
    ) -> tuple[float, float]:
        """(estimate, standard error) of Λ_t(θ) by the delta method."""
        a = self.totals(t)
        z = theta * a
        z_max = float(np.max(z))
        if check_overflow and z_max > _EXP_OVERFLOW:
            raise NumericInstabilityError(
                f"exp({z_max:.3g}) overflows the float range while estimating the "
                f"log-MGF at theta={theta:.6g}, t={t:.6g}; retry with a smaller theta"
            )
        shift = max(z_max, 0.0)
        w = np.exp(z - shift)
        mean = float(np.mean(w))
        value = shift + math.log(mean)
        se = float(np.std(w, ddof=1)) / (mean * math.sqrt(w.size))
        return value, se

    def zero_fraction(self, t: float) -> float:
        """Empirical probability that no work arrives in (0, t]."""
        a = self.totals(t)
        return float(np.mean(a == 0.0))


def _make_evaluator(
    model: TrafficModel, mode: str, samples: int, seed: int
) -> AnalyticCgf | MonteCarloCgf:
    if mode == "auto":
        mode = "analytic" if model.is_poisson else "monte_carlo"
    if mode == "analytic":
        return AnalyticCgf(model)
    if mode == "monte_carlo":
        return MonteCarloCgf(model, samples=samples, seed=seed)
    raise ConfigurationError(f"mode must be 'auto', 'analytic' or 'monte_carlo', got {mode!r}")


def log_mgf_arrivals(
    model: TrafficModel,
    theta: float,
    t: float,
    mode: str = "analytic",
    *,
    samples: int = 100_000,
    seed: int = 0,
    with_std_error: bool = False,
) -> float | tuple[float, float]:
    """Log moment generating function Λ_t(θ) of the work arriving in (0, t].

    ``mode='analytic'`` uses the exact compound-Poisson formula
    λ t (M(θ) − 1) and requires Poisson arrivals.  ``mode='monte_carlo'``
    estimates the transform from fresh samples; pass ``with_std_error=True``
    to also receive the delta-method standard error of the estimate.
    """
    if t <= 0:
        raise ConfigurationError(f"t must be positive, got {t}")
    if theta >= model.mark_mgf_domain_sup:
        raise ConfigurationError(
            f"theta={theta:.6g} is outside the mark transform domain "
            f"(finite only for theta < {model.mark_mgf_domain_sup:.6g})"
        )
    if mode == "analytic":
        value = AnalyticCgf(model).log_mgf(theta, t)
        return (value, 0.0) if with_std_error else value
    if mode == "monte_carlo":
        mc = MonteCarloCgf(model, samples=samples, seed=seed)
        value, se = mc.log_mgf_with_error(theta, t)
        return (value, se) if with_std_error else value
    raise ConfigurationError(f"mode must be 'analytic' or 'monte_carlo', got {mode!r}")


# ---------------------------------------------------------------------------
# Legendre transforms
# ---------------------------------------------------------------------------


def _legendre_sup(
    objective: Callable[[float], float],
    theta_sup: float,
    advice: str,
) -> float:
    """sup over θ of a concave objective, mapped to [0, ∞) with failure advice."""
    try:
        result = maximize_unimodal(objective, upper=theta_sup, x0=0.0, xtol=1e-10)
    except NumericInstabilityError as exc:
        raise NumericInstabilityError(f"{exc}; {advice}") from exc
    # θ = 0 always yields 0, so the supremum is nonnegative; clamp noise.
    return max(0.0, result.value)


def psi(
    model: TrafficModel,
    x: float,
    t: float,
    mode: str = "auto",
    *,
    evaluator: CgfEvaluator | None = None,
    samples: int = 100_000,
    seed: int = 0,
) -> float:
    """Per-unit-time Legendre transform Ψ(x,t) = sup_θ [θx − Λ_t(θ)/t].

    Zero at the mean work rate, +∞ for negative x (work is nonnegative).
    Pass ``evaluator`` to reuse a cached :class:`MonteCarloCgf` across calls;
    otherwise one is built according to ``mode``.
    """
    if t <= 0:
        raise ConfigurationError(f"t must be positive, got {t}")
    if x < 0:
        return math.inf
    ev = evaluator if evaluator is not None else _make_evaluator(model, mode, samples, seed)
    if x == 0.0:
        # sup_θ [−Λ_t(θ)/t] is approached as θ → −∞, where the transform
        # tends to log P(A(0,t) = 0).
        if isinstance(ev, AnalyticCgf):
            return model.point_rate
        if isinstance(ev, MonteCarloCgf):
            p0 = ev.zero_fraction(t)
            if p0 == 0.0:
                raise NumericInstabilityError(
                    "no idle windows among the Monte Carlo samples; "
                    "raise the sample count to probe x = 0"
                )
            return -math.log(p0) / t

    def objective(theta: float) -> float:
        lam = ev.log_mgf(theta, t)
        if math.isinf(lam):
            return -math.inf
        return theta * x - lam / t

    return _legendre_sup(
        objective,
        ev.theta_sup,
        advice=(
            "the Legendre objective keeps increasing on the probed range; for Monte "
            "Carlo transforms this usually means x exceeds the empirical support — "
            "raise the sample count"
        ),
    )


def omega_star(model: TrafficModel, y: float, method: str = "auto") -> float:
    """Instantaneous rate function Ω*(y) = sup_θ [θy − λ(M(θ) − 1)].

    ``λ`` is the arrival-point rate and ``M`` the mark transform.  Closed form
    for unit marks (``y ln(y/λ) − y + λ``); numeric concave maximisation
    otherwise.  ``method`` forces ``'closed_form'`` or ``'numeric'``; the
    default picks the closed form when available.
    """
    lam = model.point_rate
    if y < 0:
        return math.inf
    if y == 0.0:
        # Approached as θ → −∞ where M(θ) → 0 (marks are positive).
        return lam
    if method not in ("auto", "closed_form", "numeric"):
        raise ConfigurationError(
            f"method must be 'auto', 'closed_form' or 'numeric', got {method!r}"
        )
    from .traffic import UnitMarks  # local import to avoid a circular reference

    has_closed_form = isinstance(model.marks, UnitMarks)
    if method == "closed_form" and not has_closed_form:
        raise ConfigurationError("closed form is available only for unit marks")
    if has_closed_form and method in ("auto", "closed_form"):
        return y * math.log(y / lam) - y + lam

    def objective(theta: float) -> float:
        m = model.mark_mgf(theta)
        if math.isinf(m):
            return -math.inf
        return theta * y - lam * (m - 1.0)

    return _legendre_sup(
        objective,
        model.mark_mgf_domain_sup,
        advice="the instantaneous transform has no interior maximiser at this argument",
    )


# ---------------------------------------------------------------------------
# Assumption diagnostics
# ---------------------------------------------------------------------------


class Verdict(str, Enum):
    PASS = "pass"
    WARN = "warn"
    FAIL = "fail"


_VERDICT_ORDER = {Verdict.PASS: 0, Verdict.WARN: 1, Verdict.FAIL: 2}


@dataclass(frozen=True)
class ProbeGrid:
    """Probe locations for the asymptotic-growth diagnostics.

    ``t_values`` must span at least two decades (the checks extrapolate a
    large-t limit).  ``x_values`` are absolute work rates for the first-order
    check; ``d_values`` are offsets above the mean rate for the second-order
    checks.
    """

    t_values: tuple[float, ...]
    x_values: tuple[float, ...]
    d_values: tuple[float, ...]
    mode: str = "auto"
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.t_values)
        object.__setattr__(self, "t_values", ts)
        object.__setattr__(self, "x_values", tuple(float(x) for x in self.x_values))
        object.__setattr__(self, "d_values", tuple(float(d) for d in self.d_values))
        if len(ts) < 3 or any(t <= 1.0 for t in ts) or sorted(ts) != list(ts):
            raise ConfigurationError("t_values must be at least three increasing values > 1")
        if max(ts) / min(ts) < 100.0:
            raise ConfigurationError("t_values must span at least two decades")
        if any(x < 0 for x in self.x_values) or not self.x_values:
            raise ConfigurationError("x_values must be nonnegative and nonempty")
        if any(d <= 0 for d in self.d_values) or not self.d_values:
            raise ConfigurationError("d_values must be positive and nonempty")

    @staticmethod
    def default(model: TrafficModel, *, samples: int = 50_000, seed: int = 0) -> "ProbeGrid":
        rate = model.mean_work_rate
        return ProbeGrid(
            t_values=tuple(np.geomspace(2.0, 250.0, 6)),
            x_values=(1.5 * rate, 2.0 * rate),
            d_values=(0.1 * rate, 0.2 * rate, 0.4 * rate),
            samples=samples,
            seed=seed,
        )


@dataclass(frozen=True)
class AssumptionCheck:
    """Outcome of one growth check: probe table, ratios, verdict."""

    name: str
    verdict: Verdict
    probes: tuple[dict, ...]
    detail: str

    def to_record(self) -> dict:
        return {
            "check": self.name,
            "verdict": self.verdict.value,
            "detail": self.detail,
            "probes": list(self.probes),
        }


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-assumption verdicts for a traffic model's large-t growth behaviour."""

    model_label: str
    checks: tuple[AssumptionCheck, ...]

    @property
    def verdict(self) -> Verdict:
        return max((c.verdict for c in self.checks), key=_VERDICT_ORDER.get)

    def to_records(self) -> list[dict]:
        records = [c.to_record() for c in self.checks]
        records.append({"check": "overall", "verdict": self.verdict.value, "model": self.model_label})
        return records


_RATIO_PASS_THRESHOLD = 0.05
_RATIO_FAIL_THRESHOLD = 0.01


def _ratio_verdict(ratios: Sequence[float]) -> tuple[Verdict, str]:
    """Grade a sequence of growth ratios sampled along increasing t."""
    arr = np.asarray(ratios, dtype=float)
    if arr.size == 0:
        return Verdict.WARN, "no usable probes"
    if not np.all(np.isfinite(arr)):
        return Verdict.FAIL, "nonfinite ratio estimates"
    first, last = float(arr[0]), float(arr[-1])
    if last < _RATIO_FAIL_THRESHOLD or (last < _RATIO_PASS_THRESHOLD and last < 0.5 * first):
        return Verdict.FAIL, f"ratios decay toward zero (final {last:.3g})"
    if np.all(arr > _RATIO_PASS_THRESHOLD) and last >= first:
        return Verdict.PASS, f"ratios positive and growing (final {last:.3g})"
    return Verdict.WARN, f"inconclusive ratio trend (final {last:.3g})"


def assumption_diagnostics(
    model: TrafficModel,
    probe: ProbeGrid | None = None,
    *,
    evaluator: CgfEvaluator | None = None,
) -> DiagnosticsReport:
    """Check the large-t growth conditions underpinning the horizon bounds.

    Three checks are performed on the probe grid:

    * first-order: t·Ψ(x,t)/log t stays bounded away from 0 and grows, for
      work rates x above the mean;
    * second-order, offsets first: for each fixed offset d the curvature
      ratio t·Ψ(mean+d, t)/(d² log t) grows in t;
    * second-order, horizon first: for each fixed t the worst offset still
      shows positive curvature, improving as t grows.

    Optimisation failures during probing (no interior maximiser — e.g. a
    transform linear in θ, which has zero curvature) are graded Fail.
    """
    if probe is None:
        probe = ProbeGrid.default(model)
    ev = (
        evaluator
        if evaluator is not None
        else _make_evaluator(model, probe.mode, probe.samples, probe.seed)
    )
    mean_rate = model.mean_work_rate

    def safe_psi(x: float, t: float) -> tuple[float, str | None]:
        try:
            return psi(model, x, t, evaluator=ev), None
        except NumericInstabilityError as exc:
            return math.nan, str(exc)

    checks: list[AssumptionCheck] = []

    # First order: x strictly away from the mean rate.
    probes: list[dict] = []
    ratio_rows: list[list[float]] = []
    failure: str | None = None
    for x in probe.x_values:
        if x == mean_rate:
            continue  # the ratio is identically 0 at the mean; not informative
        row = []
        for t in probe.t_values:
            value, err = safe_psi(x, t)
            ratio = t * value / math.log(t)
            row.append(ratio)
            probes.append({"x": x, "t": t, "psi": value, "ratio": ratio})
            if err is not None:
                failure = err
        ratio_rows.append(row)
    if failure is not None:
        checks.append(
            AssumptionCheck(
                "first_order_growth", Verdict.FAIL, tuple(probes), f"probe failed: {failure}"
            )
        )
    else:
        verdicts = [_ratio_verdict(row) for row in ratio_rows]
        worst = max(verdicts, key=lambda v: _VERDICT_ORDER[v[0]])
        checks.append(AssumptionCheck("first_order_growth", worst[0], tuple(probes), worst[1]))

    # Second order at mean + d, both iteration orders over the same grid.
    table = np.empty((len(probe.d_values), len(probe.t_values)))
    probes2: list[dict] = []
    failure = None
    for i, d in enumerate(probe.d_values):
        for j, t in enumerate(probe.t_values):
            value, err = safe_psi(mean_rate + d, t)
            ratio = t * value / (d * d * math.log(t))
            table[i, j] = ratio
            probes2.append({"d": d, "t": t, "psi": value, "ratio": ratio})
            if err is not None:
                failure = err
    if failure is not None:
        for name in ("second_order_offset_then_horizon", "second_order_horizon_then_offset"):
            checks.append(
                AssumptionCheck(name, Verdict.FAIL, tuple(probes2), f"probe failed: {failure}")
            )
    else:
        # Offsets first: each fixed d must grow along t.
        verdicts = [_ratio_verdict(table[i, :]) for i in range(table.shape[0])]
        worst = max(verdicts, key=lambda v: _VERDICT_ORDER[v[0]])
        checks.append(
            AssumptionCheck(
                "second_order_offset_then_horizon", worst[0], tuple(probes2), worst[1]
            )
        )
        # Horizon first: the worst offset at each t, graded along t.
        min_over_d = table.min(axis=0)
        verdict, detail = _ratio_verdict(min_over_d)
        checks.append(
            AssumptionCheck("second_order_horizon_then_offset", verdict, tuple(probes2), detail)
        )

    label = f"{type(model.family).__name__}/{type(model.marks).__name__}"
    return DiagnosticsReport(model_label=label, checks=tuple(checks))


# ---------------------------------------------------------------------------
# Covariance grids and the Gaussian quadratic form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceGrid:
    """Covariance matrix of the centred work process on a fixed time grid.

    ``matrix[k, l]`` is the covariance of the centred cumulative work at
    times ``times[k]`` and ``times[l]``, assembled from the variance function
    ``v`` of the stationary-increment process by polarisation:
    Γ(s,t) = (v(s) + v(t) − v(|t−s|)) / 2.
    """

    times: np.ndarray
    matrix: np.ndarray
    variance_std_errors: np.ndarray | None = None
    psd_adjusted: bool = False

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float).reshape(-1)
        matrix = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "matrix", matrix)
        if times.size == 0 or np.any(times <= 0) or not np.all(np.diff(times) > 0):
            raise ConfigurationError("grid times must be positive and strictly increasing")
        if matrix.shape != (times.size, times.size):
            raise ConfigurationError("covariance matrix shape must match the grid")
        if not np.allclose(matrix, matrix.T, atol=1e-12):
            raise ConfigurationError("covariance matrix must be symmetric")

    @property
    def variance(self) -> np.ndarray:
        """The variance function v at the grid times (matrix diagonal)."""
        return np.diag(self.matrix).copy()


def _polarize(times: np.ndarray, v: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    s = times[:, None]
    t = times[None, :]
    return 0.5 * (v(s) + v(t) - v(np.abs(s - t)))


def covariance_grid(
    model: TrafficModel,
    times: Sequence[float] | np.ndarray,
    mode: str = "auto",
    *,
    samples: int = 20_000,
    seed: int = 0,
) -> CovarianceGrid:
    """Covariance of the centred work process at the given grid times.

    Analytic mode (Poisson arrivals) uses v(t) = λE[Y²]·t exactly.  Monte
    Carlo mode estimates the variance function at every needed lag from one
    set of sampled paths, then polarises; an estimate that fails positive
    semidefiniteness by sampling noise is projected onto the PSD cone with a
    warning.
    """
    t_arr = np.asarray(times, dtype=float).reshape(-1)
    if t_arr.size == 0 or np.any(t_arr <= 0) or not np.all(np.diff(t_arr) > 0):
        raise ConfigurationError("grid times must be positive and strictly increasing")
    if mode == "auto":
        mode = "analytic" if model.is_poisson else "monte_carlo"
    if mode == "analytic":
        if not model.is_poisson:
            raise UnsupportedModelError(
                "analytic covariance requires Poisson arrivals; use Monte Carlo mode"
            )
        sigma2 = model.work_variance_rate
        matrix = _polarize(t_arr, lambda u: sigma2 * u)
        return CovarianceGrid(times=t_arr, matrix=matrix)
    if mode != "monte_carlo":
        raise ConfigurationError(f"mode must be 'auto', 'analytic' or 'monte_carlo', got {mode!r}")

    # Estimate v at every lag appearing in the polarisation from one bundle
    # of sampled paths (common random numbers across lags).
    lags = {float(t) for t in t_arr}
    for a in t_arr:
        for b in t_arr:
            gap = abs(float(a) - float(b))
            if gap > 0:
                lags.add(gap)
    lag_list = sorted(lags)
    horizon = max(lag_list)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed)))
    cum = np.empty((samples, len(lag_list)))
    for i in range(samples):
        path = sample_path(model, horizon, rng)
        cum[i] = path.cumulative(np.asarray(lag_list))
    centred = cum - np.mean(cum, axis=0)
    var = np.var(cum, axis=0, ddof=1)
    m4 = np.mean(centred**4, axis=0)
    n = samples
    var_of_var = (m4 - var**2 * (n - 3) / (n - 1)) / n
    se = np.sqrt(np.maximum(var_of_var, 0.0))
    v_map = dict(zip(lag_list, var))
    se_map = dict(zip(lag_list, se))

    def v_of(u: np.ndarray) -> np.ndarray:
        flat = np.asarray(u, dtype=float).reshape(-1)
        out = np.array([0.0 if x == 0 else v_map[x] for x in flat])
        return out.reshape(np.shape(u))

    matrix = _polarize(t_arr, v_of)
    eigvals = np.linalg.eigvalsh(matrix)
    psd_adjusted = False
    if eigvals[0] < -1e-12 * max(1.0, float(eigvals[-1])):
        warnings.warn(
            "estimated covariance was not positive semidefinite; "
            "projected onto the PSD cone (sampling noise)",
            stacklevel=2,
        )
        w, q = np.linalg.eigh(matrix)
        matrix = (q * np.maximum(w, 0.0)) @ q.T
        matrix = 0.5 * (matrix + matrix.T)
        psd_adjusted = True
    se_grid = np.array([se_map[float(t)] for t in t_arr])
    return CovarianceGrid(
        times=t_arr, matrix=matrix, variance_std_errors=se_grid, psd_adjusted=psd_adjusted
    )


def rate_rkhs(values: Sequence[float] | np.ndarray, cov: CovarianceGrid) -> float:
    """Gaussian quadratic form ½ zᵀ Γ⁻¹ z of path values on the grid.

    ``values[k]`` is the path value at ``cov.times[k]`` (the path implicitly
    starts at 0 at time 0).  A singular Γ falls back to the pseudo-inverse
    with a rank warning.
    """
    z = np.asarray(values, dtype=float).reshape(-1)
    if z.shape != cov.times.shape:
        raise ConfigurationError(
            f"got {z.size} path values for a grid of {cov.times.size} times"
        )
    gamma = cov.matrix
    try:
        solved = np.linalg.solve(gamma, z)
    except np.linalg.LinAlgError:
        warnings.warn(
            "covariance matrix is singular; using the pseudo-inverse "
            "(rate restricted to the attainable subspace)",
            stacklevel=2,
        )
        solved = np.linalg.pinv(gamma) @ z
    return 0.5 * float(z @ solved)


# ---------------------------------------------------------------------------
# Regime rate functionals on piecewise-linear paths
# ---------------------------------------------------------------------------


def rate_small_buffer_ld(path: PiecewiseLinearPath, model: TrafficModel) -> float:
    """Large-deviations action of a piecewise-linear path in the small-buffer
    regime: Σ over segments of length · Ω*(slope + mean work rate).

    The path is a centred fluctuation, so slopes below −λE[Y] (total work
    decreasing) are impossible and yield +∞.
    """
    lengths = path.segment_lengths()
    slopes = path.slopes()
    mean_rate = model.mean_work_rate
    total = 0.0
    for length, slope in zip(lengths, slopes):
        value = omega_star(model, slope + mean_rate)
        if math.isinf(value):
            return math.inf
        total += length * value
    return total


def rate_small_buffer_md(path: PiecewiseLinearPath, model: TrafficModel) -> float:
    """Diffusion-scale action: Σ over segments of length · slope² / (2 λE[Y²])."""
    lengths = path.segment_lengths()
    slopes = path.slopes()
    sigma2 = model.work_variance_rate
    return float(np.sum(lengths * slopes**2) / (2.0 * sigma2))


class LightLoadReading(str, Enum):
    """Which of the two light-load rate formulas to evaluate.

    ``THEOREM_LITERAL`` charges only the increase accumulated before time
    β−1: the rate is x(β−1) on paths nondecreasing up to β−1.
    ``LEMMA_DERIVED`` charges (β−1)·(total increase) on paths nondecreasing
    over the whole window.  The two coincide for β=2 on paths that stop
    growing by time 1, and disagree otherwise; the default everywhere in this
    package is ``LEMMA_DERIVED``.
    """

    THEOREM_LITERAL = "theorem_literal"
    LEMMA_DERIVED = "lemma_derived"


def rate_light_load(
    path: PiecewiseLinearPath,
    beta: float,
    reading: LightLoadReading | str = LightLoadReading.LEMMA_DERIVED,
) -> float:
    """Light-load action of a nondecreasing piecewise-linear path.

    See :class:`LightLoadReading` for the two formulas.  Decreasing paths
    get +∞ (work input cannot decrease).
    """
    reading = LightLoadReading(reading)
    if beta <= 1:
        raise ConfigurationError(f"beta must exceed 1 in the light-load regime, got {beta}")
    horizon = beta - 1.0
    if reading is LightLoadReading.THEOREM_LITERAL:
        if path.window < horizon:
            raise ConfigurationError(
                f"path window {path.window:.6g} is shorter than beta-1 = {horizon:.6g}"
            )
        slopes = path.slopes()
        starts = path.breakpoints[:-1]
        relevant = starts < horizon
        if np.any(slopes[relevant] < 0):
            return math.inf
        return float(path.value(horizon))
    if np.any(np.diff(path.values) < 0):
        return math.inf
    return horizon * float(path.values[-1])


def rate_original_ld_partition(
    values: Sequence[float] | np.ndarray,
    partition: Partition,
    model: TrafficModel,
) -> float:
    """Finite-partition action Σ_i length_i · Ψ₁(increment_i / length_i).

    ``values[k]`` is the centred path value at the partition's k-th positive
    grid time.  Requires independent increments (Poisson arrivals): only then
    does the joint transform factorise across sub-intervals, making the
    per-unit-time transform Ψ₁(w) = Ω*(w + λE[Y]) applicable per cell.
    Refining the partition can only increase the value.
    """
    if not model.is_poisson:
        raise UnsupportedModelError(
            "the finite-partition action requires independent increments "
            "(Poisson arrivals); renewal and on/off families are not supported"
        )
    z = np.asarray(values, dtype=float).reshape(-1)
    lengths = partition.interval_lengths()
    if z.size != lengths.size:
        raise ConfigurationError(
            f"got {z.size} path values for a partition with {lengths.size} intervals"
        )
    increments = np.diff(np.concatenate(([0.0], z)))
    mean_rate = model.mean_work_rate
    total = 0.0
    for length, inc in zip(lengths, increments):
        value = omega_star(model, inc / length + mean_rate)
        if math.isinf(value):
            return math.inf
        total += length * value
    return total
