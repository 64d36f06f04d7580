import json
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import rpforest.bench as bench
from rpforest.bench import (
    ConfigError,
    ExperimentConfig,
    InvariantError,
    ReportRow,
    digest_batch,
    emit_report,
    load_report,
    run_experiment,
    time_parallel_scaling,
)
from rpforest.cli import main as cli_main
from rpforest.data import Dataset, gen_gaussian, save_points, standardize
from rpforest.forest import RandomProjectionForest

REPO_ROOT = Path(__file__).resolve().parent.parent


def gauss(n, dim, seed):
    return gen_gaussian(n, dim, [1.0] * dim, seed=seed)


def small_cfg(**overrides):
    base = dict(
        dataset=gauss(120, 4, 60),
        dataset_id="unit",
        k=3,
        tree_counts=(2, 4),
        n_try_list=(1,),
        leaf_capacity=10,
        runs=3,
        master_seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


TIMING_FIELDS = ("build_ms", "build_ms_std", "query_ms", "query_ms_std")


def strip_timing(row: ReportRow) -> ReportRow:
    return replace(row, **{name: 0.0 for name in TIMING_FIELDS})


class TestConfigValidation:
    def test_requires_some_input(self):
        with pytest.raises(ConfigError, match="no dataset"):
            ExperimentConfig().validate()

    @pytest.mark.parametrize(
        "overrides",
        [
            {"k": 0},
            {"tree_counts": ()},
            {"tree_counts": (0,)},
            {"n_try_list": ()},
            {"leaf_capacity": 1},
            {"runs": 0},
            {"workers": 0},
            {"out_format": "yaml"},
            {"format": "parquet"},
        ],
    )
    def test_rejects_bad_fields(self, overrides):
        with pytest.raises(ConfigError):
            small_cfg(**overrides).validate()

    def test_k_must_fit_dataset(self):
        with pytest.raises(ConfigError, match="k="):
            run_experiment(small_cfg(dataset=gauss(4, 2, 0), k=4, runs=1))


class TestRunExperiment:
    def test_row_counts_and_layout(self):
        rows = run_experiment(small_cfg())
        # 2 cells x (3 runs + 1 mean row)
        assert len(rows) == 8
        assert [r.aggregate for r in rows] == ["run", "run", "run", "mean"] * 2
        assert all(r.dataset_id == "unit" for r in rows)

    def test_aggregate_is_recomputable_mean_and_std(self):
        rows = run_experiment(small_cfg())
        for t in (2, 4):
            cell = [r for r in rows if r.n_trees == t]
            runs = [r for r in cell if r.aggregate == "run"]
            mean = next(r for r in cell if r.aggregate == "mean")
            values = np.array([r.missing_rate for r in runs])
            assert mean.missing_rate == pytest.approx(values.mean(), rel=1e-15)
            assert mean.missing_rate_std == pytest.approx(values.std(ddof=1), rel=1e-12)
            times = np.array([r.build_ms for r in runs])
            assert mean.build_ms == pytest.approx(times.mean(), rel=1e-12)

    def test_exactness_limit_cell_reports_zero(self):
        cfg = small_cfg(tree_counts=(1,), leaf_capacity=121, runs=2)
        rows = run_experiment(cfg)
        for row in rows:
            assert row.missing_rate == 0.0
            assert row.normalized_discrepancy == 0.0
            assert row.shortfall_count == 0.0

    def test_identical_config_identical_bytes_modulo_timing(self):
        cfg = small_cfg()
        first = [strip_timing(r) for r in run_experiment(cfg)]
        second = [strip_timing(r) for r in run_experiment(cfg)]
        assert emit_report(first) == emit_report(second)

    def test_runs_reconstructible_from_logged_seed(self):
        cfg = small_cfg()
        row = next(r for r in run_experiment(cfg) if r.aggregate == "run" and r.run == 1)
        forest = RandomProjectionForest(
            n_trees=row.n_trees,
            leaf_capacity=row.leaf_capacity,
            n_try=row.n_try,
            random_state=row.seed,
        ).fit(cfg.dataset)
        batch = forest.batch_query_dataset(k=row.k)
        assert digest_batch(batch) == row.results_sha256

    def test_no_oracle_skips_metrics(self):
        rows = run_experiment(small_cfg(no_oracle=True, runs=1))
        assert all(r.missing_rate is None for r in rows)
        assert all(r.results_sha256 is not None for r in rows)

    def test_oracle_size_guard(self, monkeypatch):
        monkeypatch.setattr(bench, "ORACLE_MAX_POINTS", 100)
        cfg = small_cfg(runs=1)
        with pytest.raises(ConfigError, match="no-oracle"):
            run_experiment(cfg)
        rows = run_experiment(replace(cfg, no_oracle=True))
        assert rows and all(r.missing_rate is None for r in rows)

    def test_standardize_flag_changes_geometry(self):
        skewed = Dataset(gauss(100, 3, 61).points * np.array([100.0, 1.0, 1.0]))
        raw = run_experiment(small_cfg(dataset=skewed, tree_counts=(2,), runs=1))
        scaled = run_experiment(
            small_cfg(dataset=skewed, tree_counts=(2,), runs=1, standardize=True)
        )
        manual = run_experiment(
            small_cfg(dataset=standardize(skewed), tree_counts=(2,), runs=1)
        )
        assert scaled[0].mean_exact_dk == manual[0].mean_exact_dk
        assert scaled[0].mean_exact_dk != raw[0].mean_exact_dk

    def test_oracle_cache_reused(self, tmp_path):
        cfg = small_cfg(oracle_cache=str(tmp_path), runs=1, tree_counts=(2,))
        run_experiment(cfg)
        assert len(list(tmp_path.glob("*.npz"))) == 1
        rows = run_experiment(cfg)
        assert len(list(tmp_path.glob("*.npz"))) == 1
        assert rows[0].missing_rate is not None


class TestEmitReport:
    def test_empty_rows_is_header_only(self):
        text = emit_report([])
        assert text.splitlines() == [",".join(f for f in bench._ROW_FIELDS)]

    def test_csv_round_trip_exact(self):
        rows = run_experiment(small_cfg(runs=2, tree_counts=(3,)))
        assert load_report(emit_report(rows)) == rows

    def test_json_round_trip_and_schema(self, tmp_path):
        rows = run_experiment(small_cfg(runs=1, tree_counts=(2,)))
        path = tmp_path / "report.json"
        text = emit_report(rows, format="json", path=path)
        payload = json.loads(path.read_text())
        assert payload["schema_version"] == 1
        assert load_report(text, format="json") == rows

    def test_write_and_load_from_path(self, tmp_path):
        rows = run_experiment(small_cfg(runs=1, tree_counts=(2,)))
        path = tmp_path / "report.csv"
        emit_report(rows, path=path)
        assert load_report(str(path)) == rows

    def test_rejects_unknown_format(self):
        with pytest.raises(ConfigError):
            emit_report([], format="xml")
        with pytest.raises(ValueError):
            load_report("a,b\n", format="xml")

    def test_rejects_foreign_header(self):
        with pytest.raises(ValueError, match="header"):
            load_report("a,b\n1,2\n")


class TestParallelScaling:
    def test_single_worker_baseline_row(self):
        rows = time_parallel_scaling(small_cfg(), [1], n_trees=3)
        assert len(rows) == 1
        assert rows[0].workers == 1 and rows[0].aggregate == "scaling"
        assert rows[0].n_trees == 3

    def test_results_identical_across_worker_counts(self):
        rows = time_parallel_scaling(small_cfg(), [1, 2], n_trees=4)
        assert rows[0].results_sha256 == rows[1].results_sha256
        assert rows[0].missing_rate == rows[1].missing_rate
        assert rows[0].seed == rows[1].seed

    def test_rejects_bad_worker_list(self):
        with pytest.raises(ConfigError):
            time_parallel_scaling(small_cfg(), [])
        with pytest.raises(ConfigError):
            time_parallel_scaling(small_cfg(), [0, 2])


class TestCliExitCodes:
    def run_cli(self, *argv):
        return cli_main(list(argv))

    def test_accuracy_end_to_end(self, tmp_path, capsys):
        data_path = tmp_path / "d.csv"
        save_points(gauss(80, 3, 62), data_path)
        out_path = tmp_path / "r.csv"
        code = self.run_cli(
            "accuracy", "--input", str(data_path), "--k", "2",
            "--trees", "2,3", "--runs", "2", "--seed", "5",
            "--out", str(out_path),
        )
        assert code == 0
        rows = load_report(str(out_path))
        assert len(rows) == 6
        assert {r.n_trees for r in rows} == {2, 3}

    def test_default_command_is_accuracy(self, tmp_path, capsys):
        data_path = tmp_path / "d.csv"
        save_points(gauss(30, 2, 63), data_path)
        code = self.run_cli("--input", str(data_path), "--k", "1", "--trees", "2", "--runs", "1")
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("dataset_id,")
        assert len(out.splitlines()) == 3

    def test_usage_errors_exit_one(self, capsys):
        assert self.run_cli("accuracy", "--bogus-flag") == 1
        assert self.run_cli("definitely-not-a-command") == 1
        assert self.run_cli("accuracy") == 1  # no input
        assert self.run_cli() == 1

    def test_data_errors_exit_two(self, tmp_path):
        assert self.run_cli("accuracy", "--input", str(tmp_path / "missing.csv")) == 2
        ragged = tmp_path / "ragged.csv"
        ragged.write_text("1,2\n3\n")
        assert self.run_cli("accuracy", "--input", str(ragged)) == 2

    def test_invariant_errors_exit_three(self, monkeypatch, tmp_path):
        def boom(cfg):
            raise InvariantError("synthetic failure")

        monkeypatch.setattr("rpforest.cli.run_experiment", boom)
        data_path = tmp_path / "d.csv"
        save_points(gauss(10, 2, 64), data_path)
        assert self.run_cli("accuracy", "--input", str(data_path)) == 3

    def test_help_exits_zero(self, capsys):
        assert self.run_cli("--help") == 0
        assert self.run_cli("accuracy", "--help") == 0

    def test_synth_then_scaling(self, tmp_path, capsys):
        data_path = tmp_path / "s.csv"
        assert self.run_cli("synth", "--n", "60", "--dim", "3", "--seed", "2",
                            "--out", str(data_path)) == 0
        out_path = tmp_path / "scaling.csv"
        code = self.run_cli(
            "scaling", "--input", str(data_path), "--k", "2", "--trees", "3",
            "--workers-list", "1,2", "--out", str(out_path),
        )
        assert code == 0
        rows = load_report(str(out_path))
        assert [r.workers for r in rows] == [1, 2]
        assert rows[0].results_sha256 == rows[1].results_sha256


class TestCliConfigFile:
    def test_config_mirrors_flags(self, tmp_path, capsys):
        data_path = tmp_path / "d.csv"
        save_points(gauss(40, 2, 65), data_path)
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "input": str(data_path),
            "k": 2,
            "trees": [2, 3],
            "ntry": "1",
            "leaf-size": 8,
            "runs": 1,
            "seed": 9,
        }))
        assert cli_main(["accuracy", "--config", str(config)]) == 0
        rows = load_report(capsys.readouterr().out)
        assert {r.n_trees for r in rows} == {2, 3}
        assert all(r.k == 2 and r.leaf_capacity == 8 for r in rows)

    def test_explicit_flag_beats_config(self, tmp_path, capsys):
        data_path = tmp_path / "d.csv"
        save_points(gauss(40, 2, 66), data_path)
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"input": str(data_path), "k": 2, "trees": "2", "runs": 1}))
        assert cli_main(["accuracy", "--config", str(config), "--k", "1"]) == 0
        rows = load_report(capsys.readouterr().out)
        assert all(r.k == 1 for r in rows)

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"nope": 1}))
        assert cli_main(["accuracy", "--config", str(config)]) == 1

    def test_malformed_config_rejected(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text("{not json")
        assert cli_main(["accuracy", "--config", str(config)]) == 1


class TestPlottingIntegration:
    def test_report_feeds_plot_script_unchanged(self, tmp_path):
        rows = run_experiment(small_cfg(runs=2))
        report = tmp_path / "report.csv"
        emit_report(rows, path=report)
        png = tmp_path / "plot.png"
        proc = subprocess.run(
            [sys.executable, str(REPO_ROOT / "scripts" / "plot_report.py"),
             str(report), str(png)],
            capture_output=True,
            text=True,
            cwd=REPO_ROOT,
        )
        assert proc.returncode == 0, proc.stderr
        assert png.exists() and png.stat().st_size > 1000


class TestConsoleScript:
    def test_installed_entry_point_runs(self, tmp_path):
        data_path = tmp_path / "d.csv"
        save_points(gauss(30, 2, 67), data_path)
        proc = subprocess.run(
            ["rpforest-bench", "--input", str(data_path), "--k", "1",
             "--trees", "2", "--runs", "1"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.startswith("dataset_id,")
