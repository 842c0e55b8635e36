"""Config-driven experiment runner.

Subcommands
-----------
``simulate``   run the configured estimator over the N sweep, write the table
``predict``    solve the variational problem only
``verify``     simulate + predict + decay regression + relative gap
``diagnose``   run the growth-assumption diagnostics for the traffic model
``rate``       evaluate a rate functional on a user-supplied path file

Usage: ``manysources <subcommand> --config <file> [--out <dir>]
[--seed <u64>] [--threads <n>]``.  Results are CSV tables plus line-delimited
JSON records; reruns with the same config and seed are byte-identical.

Exit codes: 0 ok, 2 config error, 3 unsupported combination, 4 numeric
instability, 5 insufficient data.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter version
    import tomli as tomllib

from .errors import ConfigurationError, EXIT_OK, ManySourcesError
from .estimate import OverflowEstimate, decay_regression, estimate_is, estimate_naive
from .paths import PiecewiseLinearPath
from .queue_core import ScalingRegime
from .ratefn import (
    LightLoadReading,
    ProbeGrid,
    assumption_diagnostics,
    rate_light_load,
    rate_small_buffer_ld,
    rate_small_buffer_md,
)
from .traffic import (
    DeterministicMarks,
    DiscreteMarks,
    ExponentialMarks,
    InterArrivalLaw,
    OnOffFamily,
    PoissonFamily,
    RenewalFamily,
    TrafficModel,
    UnitMarks,
)
from .variational import DecayPrediction, decay_rate

__all__ = ["ExperimentConfig", "run_experiment", "main"]

_RESULT_COLUMNS = [
    "N",
    "case",
    "alpha",
    "beta",
    "buffer_B",
    "capacity_C",
    "method",
    "probability",
    "std_error",
    "ci_lower_95",
    "ci_upper_95",
    "replications",
    "hits",
    "normalized_log",
    "tilt_theta",
    "horizon_scaled",
    "tail_budget",
    "speed",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description: traffic, regime, sweep, estimator."""

    model: TrafficModel
    regime: ScalingRegime
    n_sweep: tuple[int, ...]
    replications: int
    seed: int
    tail_budget: float
    estimator: str = "importance"
    threads: int | None = None
    lattice_fraction: float = 0.5
    light_load_reading: LightLoadReading = LightLoadReading.LEMMA_DERIVED
    diagnostics_samples: int = 50_000

    def __post_init__(self) -> None:
        if not self.n_sweep:
            raise ConfigurationError("n_sweep must contain at least one N")
        if any(n < 1 for n in self.n_sweep) or list(self.n_sweep) != sorted(set(self.n_sweep)):
            raise ConfigurationError("n_sweep must be strictly increasing positive integers")
        if self.replications < 100:
            raise ConfigurationError(
                f"replications must be at least 100, got {self.replications}"
            )
        if not (0.0 < self.tail_budget <= 0.1):
            raise ConfigurationError(
                f"tail_budget must lie in (0, 0.1], got {self.tail_budget}"
            )
        if self.estimator not in ("naive", "importance"):
            raise ConfigurationError(
                f"estimator must be 'naive' or 'importance', got {self.estimator!r}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be a nonnegative integer, got {self.seed}")


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigurationError(f"missing required key '{key}' in [{context}]")
    return table[key]


def _parse_marks(table: dict) -> object:
    law = table.get("law", "unit")
    if law == "unit":
        return UnitMarks()
    if law == "deterministic":
        return DeterministicMarks(value=float(_require(table, "value", "traffic.marks")))
    if law == "exponential":
        return ExponentialMarks(mean=float(_require(table, "mean", "traffic.marks")))
    if law == "discrete":
        return DiscreteMarks(
            values=tuple(float(v) for v in _require(table, "values", "traffic.marks")),
            probabilities=tuple(
                float(p) for p in _require(table, "probabilities", "traffic.marks")
            ),
        )
    raise ConfigurationError(
        f"unknown mark law {law!r}; choose unit, deterministic, exponential or discrete"
    )


def _parse_traffic(table: dict) -> TrafficModel:
    family_name = _require(table, "family", "traffic")
    if family_name == "poisson":
        family = PoissonFamily(rate=float(_require(table, "rate", "traffic")))
    elif family_name == "renewal":
        family = RenewalFamily(
            rate=float(_require(table, "rate", "traffic")),
            law=InterArrivalLaw(table.get("interarrival", "deterministic")),
            stages=int(table.get("stages", 1)),
        )
    elif family_name == "on_off":
        family = OnOffFamily(
            on_rate=float(_require(table, "on_rate", "traffic")),
            off_rate=float(_require(table, "off_rate", "traffic")),
            emission_rate=float(_require(table, "emission_rate", "traffic")),
        )
    else:
        raise ConfigurationError(
            f"unknown traffic family {family_name!r}; choose poisson, renewal or on_off"
        )
    return TrafficModel(family=family, marks=_parse_marks(table.get("marks", {})))


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc

    model = _parse_traffic(_require(raw, "traffic", "config"))
    regime_tbl = _require(raw, "regime", "config")
    regime = ScalingRegime(
        alpha=float(_require(regime_tbl, "alpha", "regime")),
        beta=float(_require(regime_tbl, "beta", "regime")),
        buffer_B=float(_require(regime_tbl, "buffer", "regime")),
        capacity_C=float(_require(regime_tbl, "capacity", "regime")),
    )
    exp = _require(raw, "experiment", "config")
    advanced = raw.get("advanced", {})
    threads = exp.get("threads")
    return ExperimentConfig(
        model=model,
        regime=regime,
        n_sweep=tuple(int(n) for n in _require(exp, "n_sweep", "experiment")),
        replications=int(_require(exp, "replications", "experiment")),
        seed=int(exp.get("seed", 0)),
        tail_budget=float(_require(exp, "tail_budget", "experiment")),
        estimator=str(exp.get("estimator", "importance")),
        threads=int(threads) if threads is not None else None,
        lattice_fraction=float(advanced.get("lattice_fraction", 0.5)),
        light_load_reading=LightLoadReading(
            advanced.get("light_load_reading", "lemma_derived")
        ),
        diagnostics_samples=int(advanced.get("diagnostics_samples", 50_000)),
    )


# ---------------------------------------------------------------------------
# Output writers (deterministic formatting)
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_results_csv(path: Path, estimates: Sequence[OverflowEstimate]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RESULT_COLUMNS)
        for est in estimates:
            record = est.to_record()
            writer.writerow([_fmt(record[col]) for col in _RESULT_COLUMNS])


def _append_jsonl(path: Path, records: Sequence[dict]) -> None:
    with path.open("a") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def _write_plot_csv(
    path: Path,
    estimates: Sequence[OverflowEstimate],
    regime: ScalingRegime,
    fitted: tuple[float, float] | None,
    predicted: float | None,
) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "speed", "minus_log_probability", "fitted", "predicted"])
        for est in estimates:
            speed = regime.speed(est.N)
            minus_log = -math.log(est.probability) if est.probability > 0 else None
            fit_val = fitted[0] * speed + fitted[1] if fitted is not None else None
            pred_val = predicted * speed if predicted is not None else None
            writer.writerow(
                [est.N, _fmt(speed), _fmt(minus_log), _fmt(fit_val), _fmt(pred_val)]
            )


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _run_sweep(config: ExperimentConfig, out: Path) -> list[OverflowEstimate]:
    prediction: DecayPrediction | None = None
    if config.estimator == "importance":
        prediction = decay_rate(config.regime, config.model)
    estimates = []
    for n in config.n_sweep:
        if config.estimator == "importance":
            est = estimate_is(
                config.model,
                n,
                config.regime,
                prediction,
                config.replications,
                config.seed,
                config.tail_budget,
                threads=config.threads,
            )
        else:
            est = estimate_naive(
                config.model,
                n,
                config.regime,
                config.replications,
                config.seed,
                config.tail_budget,
                threads=config.threads,
            )
        estimates.append(est)
    _write_results_csv(out / "results.csv", estimates)
    return estimates


def _cmd_simulate(config: ExperimentConfig, out: Path) -> int:
    estimates = _run_sweep(config, out)
    _append_jsonl(out / "summary.jsonl", [e.to_record() | {"record": "estimate"} for e in estimates])
    for est in estimates:
        print(
            f"N={est.N}: p={est.probability:.6g} +- {est.std_error:.3g} "
            f"({est.method}, horizon {est.horizon_scaled:.4g})"
        )
    return EXIT_OK


def _cmd_predict(config: ExperimentConfig, out: Path) -> int:
    prediction = decay_rate(config.regime, config.model)
    _append_jsonl(out / "summary.jsonl", [prediction.to_record()])
    print(
        f"case={prediction.regime.case.value} decay={prediction.decay_rate:.6g} "
        f"tau*={prediction.optimal_duration} method={prediction.method.value}"
    )
    if prediction.literal_decay_rate is not None:
        print(f"theorem_literal alternative: {prediction.literal_decay_rate:.6g}")
    return EXIT_OK


def _cmd_verify(config: ExperimentConfig, out: Path) -> int:
    prediction = decay_rate(config.regime, config.model)
    estimates = _run_sweep(config, out)
    fit = decay_regression(estimates, config.regime)
    gap = abs(fit.fitted_decay - prediction.decay_rate) / prediction.decay_rate
    records = [prediction.to_record()]
    records.append(
        {
            "record": "regression",
            "fitted_decay": fit.fitted_decay,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "points": len(estimates),
        }
    )
    records.append(
        {
            "record": "gap",
            "fitted_decay": fit.fitted_decay,
            "predicted_decay": prediction.decay_rate,
            "relative_gap": gap,
        }
    )
    _append_jsonl(out / "summary.jsonl", records)
    _write_plot_csv(
        out / "plot_decay.csv",
        estimates,
        config.regime,
        (fit.fitted_decay, fit.intercept),
        prediction.decay_rate,
    )
    print(
        f"fitted decay {fit.fitted_decay:.6g} vs predicted {prediction.decay_rate:.6g} "
        f"(gap {100 * gap:.2f}%, r^2 {fit.r_squared:.4f})"
    )
    return EXIT_OK


def _cmd_diagnose(config: ExperimentConfig, out: Path) -> int:
    probe = ProbeGrid.default(
        config.model, samples=config.diagnostics_samples, seed=config.seed
    )
    report = assumption_diagnostics(config.model, probe)
    _append_jsonl(out / "diagnostics.jsonl", report.to_records())
    for check in report.checks:
        print(f"{check.name}: {check.verdict.value} — {check.detail}")
    print(f"overall: {report.verdict.value}")
    return EXIT_OK


def _load_path_file(path: Path) -> PiecewiseLinearPath:
    if not path.exists():
        raise ConfigurationError(f"path file not found: {path}")
    times: list[float] = []
    values: list[float] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected two columns (time, value), got {line!r}"
                )
            times.append(float(parts[0]))
            values.append(float(parts[1]))
    if not times or times[0] != 0.0 or values[0] != 0.0:
        raise ConfigurationError(f"{path}: the first row must be '0 0'")
    return PiecewiseLinearPath(np.asarray(times), np.asarray(values))


def _cmd_rate(config: ExperimentConfig, out: Path, path_file: str, functional: str) -> int:
    path = _load_path_file(Path(path_file))
    if functional == "small_buffer_ld":
        value = rate_small_buffer_ld(path, config.model)
    elif functional == "small_buffer_md":
        value = rate_small_buffer_md(path, config.model)
    elif functional == "light_load":
        value = rate_light_load(path, config.regime.beta, config.light_load_reading)
    else:
        raise ConfigurationError(
            f"unknown functional {functional!r}; choose small_buffer_ld, "
            "small_buffer_md or light_load"
        )
    _append_jsonl(
        out / "summary.jsonl",
        [{"record": "rate", "functional": functional, "value": value}],
    )
    print(f"{functional}: {value!r}")
    return EXIT_OK


def run_experiment(
    config: ExperimentConfig,
    command: str = "verify",
    out_dir: str | Path = "manysources-results",
    *,
    path_file: str | None = None,
    functional: str | None = None,
) -> int:
    """Run one subcommand against a validated config; returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # Start each run with a fresh summary so reruns are byte-identical.
    for name in ("summary.jsonl", "diagnostics.jsonl"):
        target = out / name
        if target.exists():
            target.unlink()
    if command == "simulate":
        return _cmd_simulate(config, out)
    if command == "predict":
        return _cmd_predict(config, out)
    if command == "verify":
        return _cmd_verify(config, out)
    if command == "diagnose":
        return _cmd_diagnose(config, out)
    if command == "rate":
        if path_file is None or functional is None:
            raise ConfigurationError("the rate subcommand needs --path and --functional")
        return _cmd_rate(config, out, path_file, functional)
    raise ConfigurationError(f"unknown subcommand {command!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manysources",
        description="Overflow-probability experiments for many-sources queueing regimes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, extra in (
        ("simulate", "run the configured estimator over the N sweep"),
        ("predict", "solve the variational decay problem"),
        ("verify", "simulate, predict, regress and report the gap"),
        ("diagnose", "check the growth assumptions for the traffic model"),
        ("rate", "evaluate a rate functional on a path file"),
    ):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", default="manysources-results", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--threads", type=int, default=None, help="override the shard parallelism"
        )
        if name == "rate":
            p.add_argument("--path", required=True, help="two-column time,value path file")
            p.add_argument(
                "--functional",
                required=True,
                help="small_buffer_ld | small_buffer_md | light_load",
            )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=int(args.seed))
        if args.threads is not None:
            config = replace(config, threads=int(args.threads))
        return run_experiment(
            config,
            args.command,
            out,
            path_file=getattr(args, "path", None),
            functional=getattr(args, "functional", None),
        )
    except ManySourcesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _append_jsonl(
                out / "summary.jsonl",
                [
                    {
                        "record": "error",
                        "error": type(exc).__name__,
                        "message": str(exc),
                        "exit_code": exc.exit_code,
                    }
                ],
            )
        except OSError:
            pass
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
