"""End-to-end tests for the config-driven experiment runner.

Each test drives ``main(argv)`` against a TOML file in a temporary directory
and inspects exit codes, stdout, and the written artifacts (results.csv,
summary.jsonl, plot_decay.csv, diagnostics.jsonl).  Reruns with the same
config and seed must be byte-identical.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

import pytest

from manysources.cli import ExperimentConfig, load_config, main, run_experiment
from manysources.errors import (
    ConfigurationError,
    InsufficientDataError,
    ManySourcesError,
    NumericInstabilityError,
    UnsupportedModelError,
)
from manysources.paths import PiecewiseLinearPath
from manysources.queue_core import ScalingRegime
from manysources.ratefn import LightLoadReading, rate_light_load, rate_small_buffer_ld
from manysources.traffic import (
    DiscreteMarks,
    ExponentialMarks,
    OnOffFamily,
    PoissonFamily,
    RenewalFamily,
    TrafficModel,
    UnitMarks,
)

BASE_CONFIG = """\
[traffic]
family = "poisson"
rate = 1.0

[traffic.marks]
law = "unit"

[regime]
alpha = 0.5
beta = 1.0
buffer = 1.0
capacity = 1.0

[experiment]
n_sweep = [4, 8]
replications = 300
seed = 5
tail_budget = 1e-6
estimator = "naive"
"""


def _write_config(tmp_path: Path, text: str = BASE_CONFIG, name: str = "exp.toml") -> Path:
    cfg = tmp_path / name
    cfg.write_text(text)
    return cfg


def _summary_records(out: Path) -> list[dict]:
    lines = (out / "summary.jsonl").read_text().splitlines()
    return [json.loads(line) for line in lines]


class TestLoadConfig:
    def test_happy_path(self, tmp_path: Path) -> None:
        config = load_config(_write_config(tmp_path))
        assert isinstance(config.model.family, PoissonFamily)
        assert isinstance(config.model.marks, UnitMarks)
        assert config.regime == ScalingRegime(alpha=0.5, beta=1.0, buffer_B=1.0, capacity_C=1.0)
        assert config.n_sweep == (4, 8)
        assert config.replications == 300
        assert config.seed == 5
        assert config.estimator == "naive"
        assert config.threads is None
        assert config.lattice_fraction == 0.5
        assert config.light_load_reading is LightLoadReading.LEMMA_DERIVED
        assert config.diagnostics_samples == 50_000

    def test_advanced_table(self, tmp_path: Path) -> None:
        text = BASE_CONFIG + (
            "\n[advanced]\nlattice_fraction = 0.25\n"
            'light_load_reading = "theorem_literal"\ndiagnostics_samples = 1000\n'
        )
        config = load_config(_write_config(tmp_path, text))
        assert config.lattice_fraction == 0.25
        assert config.light_load_reading is LightLoadReading.THEOREM_LITERAL
        assert config.diagnostics_samples == 1000

    def test_exponential_marks(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace('law = "unit"', 'law = "exponential"\nmean = 0.5')
        config = load_config(_write_config(tmp_path, text))
        assert isinstance(config.model.marks, ExponentialMarks)
        assert config.model.marks.mean == 0.5

    def test_discrete_marks(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace(
            'law = "unit"',
            'law = "discrete"\nvalues = [1.0, 2.0]\nprobabilities = [0.75, 0.25]',
        )
        config = load_config(_write_config(tmp_path, text))
        assert isinstance(config.model.marks, DiscreteMarks)
        assert config.model.marks.values == (1.0, 2.0)

    def test_renewal_family(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace(
            'family = "poisson"\nrate = 1.0',
            'family = "renewal"\nrate = 2.0\ninterarrival = "erlang"\nstages = 2',
        )
        config = load_config(_write_config(tmp_path, text))
        assert isinstance(config.model.family, RenewalFamily)
        assert config.model.family.stages == 2

    def test_on_off_family(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace(
            'family = "poisson"\nrate = 1.0',
            'family = "on_off"\non_rate = 1.0\noff_rate = 3.0\nemission_rate = 8.0',
        )
        config = load_config(_write_config(tmp_path, text))
        assert isinstance(config.model.family, OnOffFamily)

    @pytest.mark.parametrize(
        ("mutation", "needle"),
        [
            (("[traffic]", "[traffic_typo]"), "traffic"),
            (('family = "poisson"', 'family = "fractal"'), "unknown traffic family"),
            (('law = "unit"', 'law = "cauchy"'), "unknown mark law"),
            (("n_sweep = [4, 8]", "n_sweep = [8, 4]"), "strictly increasing"),
            (("n_sweep = [4, 8]", "n_sweep = [4, 4]"), "strictly increasing"),
            (("n_sweep = [4, 8]", "n_sweep = []"), "at least one"),
            (("replications = 300", "replications = 99"), "at least 100"),
            (("tail_budget = 1e-6", "tail_budget = 0.2"), "tail_budget"),
            (('estimator = "naive"', 'estimator = "bootstrap"'), "estimator"),
            (("seed = 5", "seed = -1"), "seed"),
        ],
    )
    def test_invalid_configs_rejected(
        self, tmp_path: Path, mutation: tuple[str, str], needle: str
    ) -> None:
        text = BASE_CONFIG.replace(*mutation)
        assert text != BASE_CONFIG
        with pytest.raises(ConfigurationError, match=needle):
            load_config(_write_config(tmp_path, text))

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigurationError, match="not valid TOML"):
            load_config(_write_config(tmp_path, "[traffic\nfamily="))


class TestExitCodes:
    def test_error_classes_carry_documented_codes(self) -> None:
        assert ConfigurationError("x").exit_code == 2
        assert UnsupportedModelError("x").exit_code == 3
        assert NumericInstabilityError("x").exit_code == 4
        assert InsufficientDataError("x").exit_code == 5
        assert issubclass(ConfigurationError, ManySourcesError)

    def test_predict_ok(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        assert main(["predict", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0

    def test_config_error_exits_2_and_logs(self, tmp_path: Path, capsys) -> None:
        text = BASE_CONFIG.replace("replications = 300", "replications = 10")
        cfg = _write_config(tmp_path, text)
        out = tmp_path / "out"
        assert main(["predict", "--config", str(cfg), "--out", str(out)]) == 2
        assert "error:" in capsys.readouterr().err
        records = _summary_records(out)
        assert records[-1]["record"] == "error"
        assert records[-1]["error"] == "ConfigurationError"
        assert records[-1]["exit_code"] == 2

    def test_unclassified_regime_exits_3(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace("beta = 1.0", "beta = 0.5")
        cfg = _write_config(tmp_path, text)
        out = tmp_path / "out"
        assert main(["predict", "--config", str(cfg), "--out", str(out)]) == 3
        assert _summary_records(out)[-1]["error"] == "UnsupportedModelError"

    def test_short_sweep_verify_exits_5(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)  # two-point sweep cannot support a fit
        out = tmp_path / "out"
        assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 5
        assert _summary_records(out)[-1]["exit_code"] == 5

    def test_bad_toml_exits_2(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path, "not toml [")
        assert main(["predict", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2

    def test_missing_required_cli_arg_is_an_argparse_error(self) -> None:
        with pytest.raises(SystemExit):
            main(["simulate"])  # --config is required

    def test_unknown_command_via_api(self, tmp_path: Path) -> None:
        config = load_config(_write_config(tmp_path))
        with pytest.raises(ConfigurationError, match="unknown subcommand"):
            run_experiment(config, "replay", tmp_path / "out")

    def test_rate_needs_path_and_functional(self, tmp_path: Path) -> None:
        config = load_config(_write_config(tmp_path))
        with pytest.raises(ConfigurationError, match="--path and --functional"):
            run_experiment(config, "rate", tmp_path / "out")


class TestSimulate:
    def test_writes_results_and_summary(self, tmp_path: Path, capsys) -> None:
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        with (out / "results.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "N", "case", "alpha", "beta", "buffer_B", "capacity_C", "method",
            "probability", "std_error", "ci_lower_95", "ci_upper_95",
            "replications", "hits", "normalized_log", "tilt_theta",
            "horizon_scaled", "tail_budget", "speed",
        ]
        assert len(rows) == 3  # header + one row per N
        assert [r[0] for r in rows[1:]] == ["4", "8"]
        assert all(r[6] == "naive" for r in rows[1:])
        records = _summary_records(out)
        assert len(records) == 2
        assert all(r["record"] == "estimate" for r in records)
        stdout = capsys.readouterr().out
        assert "N=4:" in stdout and "N=8:" in stdout

    def test_rerun_is_byte_identical(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        argv = ["simulate", "--config", str(cfg), "--out", str(out)]
        assert main(argv) == 0
        first_csv = (out / "results.csv").read_bytes()
        first_summary = (out / "summary.jsonl").read_bytes()
        assert main(argv) == 0
        assert (out / "results.csv").read_bytes() == first_csv
        assert (out / "summary.jsonl").read_bytes() == first_summary

    def test_thread_override_does_not_change_results(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        out1, out2 = tmp_path / "one", tmp_path / "two"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1), "--threads", "1"]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out2), "--threads", "4"]) == 0
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()

    def test_seed_override_changes_results(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        out1, out2 = tmp_path / "one", tmp_path / "two"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "99"]) == 0
        assert (out1 / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()


class TestVerify:
    CONFIG = BASE_CONFIG.replace("n_sweep = [4, 8]", "n_sweep = [4, 8, 16, 32]").replace(
        'estimator = "naive"', 'estimator = "importance"'
    )

    def test_end_to_end(self, tmp_path: Path, capsys) -> None:
        cfg = _write_config(tmp_path, self.CONFIG)
        out = tmp_path / "out"
        assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
        records = _summary_records(out)
        kinds = [r["record"] for r in records]
        assert kinds == ["prediction", "regression", "gap"]
        prediction, regression, gap = records
        assert prediction["case"] == "small_buffer_ld"
        assert prediction["decay_rate"] == pytest.approx(1.2564312086261695, rel=1e-9)
        assert regression["points"] == 4
        assert gap["relative_gap"] >= 0.0
        assert gap["fitted_decay"] == regression["fitted_decay"]
        with (out / "plot_decay.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["N", "speed", "minus_log_probability", "fitted", "predicted"]
        assert len(rows) == 5
        # predicted column is decay·speed for each N
        for row in rows[1:]:
            assert float(row[4]) == pytest.approx(
                prediction["decay_rate"] * float(row[1]), rel=1e-12
            )
        assert "fitted decay" in capsys.readouterr().out
        assert (out / "results.csv").exists()

    def test_fit_is_sane_on_this_tiny_sweep(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path, self.CONFIG)
        out = tmp_path / "out"
        main(["verify", "--config", str(cfg), "--out", str(out)])
        regression = _summary_records(out)[1]
        assert 0.5 < regression["fitted_decay"] < 2.5
        assert regression["r_squared"] > 0.9


class TestPredict:
    def test_light_load_reports_both_readings(self, tmp_path: Path, capsys) -> None:
        text = BASE_CONFIG.replace("beta = 1.0", "beta = 3.0").replace(
            "buffer = 1.0", "buffer = 0.5"
        )
        cfg = _write_config(tmp_path, text)
        out = tmp_path / "out"
        assert main(["predict", "--config", str(cfg), "--out", str(out)]) == 0
        record = _summary_records(out)[0]
        assert record["record"] == "prediction"
        assert record["case"] == "light_load"
        assert record["decay_rate"] == pytest.approx(1.0)  # (β−1)·B
        assert record["literal_decay_rate"] == pytest.approx(0.5)  # B
        stdout = capsys.readouterr().out
        assert "theorem_literal alternative" in stdout


class TestDiagnose:
    def test_poisson_model_passes(self, tmp_path: Path, capsys) -> None:
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["diagnose", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "diagnostics.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert len(records) == 4  # three checks + overall
        assert records[-1] == {
            "check": "overall",
            "verdict": "pass",
            "model": "PoissonFamily/UnitMarks",
        }
        assert "overall: pass" in capsys.readouterr().out


class TestRate:
    def _config_and_path(self, tmp_path: Path, body: str) -> tuple[Path, Path]:
        cfg = _write_config(tmp_path)
        path_file = tmp_path / "path.txt"
        path_file.write_text(body)
        return cfg, path_file

    def test_small_buffer_ld_matches_library(self, tmp_path: Path, capsys) -> None:
        cfg, path_file = self._config_and_path(tmp_path, "0 0\n1 1.5\n2 2.0\n")
        out = tmp_path / "out"
        code = main([
            "rate", "--config", str(cfg), "--out", str(out),
            "--path", str(path_file), "--functional", "small_buffer_ld",
        ])
        assert code == 0
        record = _summary_records(out)[0]
        model = TrafficModel(PoissonFamily(1.0), UnitMarks())
        expected = rate_small_buffer_ld(
            PiecewiseLinearPath([0.0, 1.0, 2.0], [0.0, 1.5, 2.0]), model
        )
        assert record == {
            "record": "rate",
            "functional": "small_buffer_ld",
            "value": pytest.approx(expected, rel=1e-12),
        }
        assert "small_buffer_ld" in capsys.readouterr().out

    def test_comma_separated_and_comments_accepted(self, tmp_path: Path) -> None:
        cfg, path_file = self._config_and_path(
            tmp_path, "# slope one path\n0, 0\n1, 1.5\n2, 2.0\n"
        )
        out = tmp_path / "out"
        assert main([
            "rate", "--config", str(cfg), "--out", str(out),
            "--path", str(path_file), "--functional", "small_buffer_md",
        ]) == 0

    def test_light_load_uses_config_beta_and_reading(self, tmp_path: Path) -> None:
        text = BASE_CONFIG.replace("beta = 1.0", "beta = 3.0") + (
            '\n[advanced]\nlight_load_reading = "theorem_literal"\n'
        )
        cfg = _write_config(tmp_path, text)
        path_file = tmp_path / "path.txt"
        path_file.write_text("0 0\n1 0.5\n2 0.5\n")
        out = tmp_path / "out"
        assert main([
            "rate", "--config", str(cfg), "--out", str(out),
            "--path", str(path_file), "--functional", "light_load",
        ]) == 0
        record = _summary_records(out)[0]
        path = PiecewiseLinearPath([0.0, 1.0, 2.0], [0.0, 0.5, 0.5])
        assert record["value"] == pytest.approx(
            rate_light_load(path, 3.0, LightLoadReading.THEOREM_LITERAL)
        )

    @pytest.mark.parametrize(
        ("body", "needle"),
        [
            ("1 1\n2 2\n", "first row"),
            ("0 0\n1 2 3\n", "two columns"),
        ],
    )
    def test_malformed_path_files_exit_2(
        self, tmp_path: Path, body: str, needle: str, capsys
    ) -> None:
        cfg, path_file = self._config_and_path(tmp_path, body)
        code = main([
            "rate", "--config", str(cfg), "--out", str(tmp_path / "out"),
            "--path", str(path_file), "--functional", "small_buffer_ld",
        ])
        assert code == 2
        assert needle in capsys.readouterr().err

    def test_unknown_functional_exits_2(self, tmp_path: Path) -> None:
        cfg, path_file = self._config_and_path(tmp_path, "0 0\n1 1\n")
        code = main([
            "rate", "--config", str(cfg), "--out", str(tmp_path / "out"),
            "--path", str(path_file), "--functional", "fractional",
        ])
        assert code == 2

    def test_missing_path_file_exits_2(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        code = main([
            "rate", "--config", str(cfg), "--out", str(tmp_path / "out"),
            "--path", str(tmp_path / "nope.txt"), "--functional", "small_buffer_ld",
        ])
        assert code == 2


class TestConsoleScript:
    def test_entry_point_runs(self, tmp_path: Path) -> None:
        cfg = _write_config(tmp_path)
        out = tmp_path / "out"
        proc = subprocess.run(
            ["manysources", "predict", "--config", str(cfg), "--out", str(out)],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert "decay=" in proc.stdout


class TestExperimentConfigValidation:
    def test_direct_construction_validates(self) -> None:
        model = TrafficModel(PoissonFamily(1.0), UnitMarks())
        regime = ScalingRegime(alpha=0.5, beta=1.0, buffer_B=1.0, capacity_C=1.0)
        with pytest.raises(ConfigurationError):
            ExperimentConfig(
                model=model,
                regime=regime,
                n_sweep=(),
                replications=300,
                seed=0,
                tail_budget=1e-6,
            )
        config = ExperimentConfig(
            model=model,
            regime=regime,
            n_sweep=(8,),
            replications=300,
            seed=0,
            tail_budget=1e-6,
        )
        assert config.estimator == "importance"
