import json
import os

import numpy as np
import pytest

import simplexrl.diagnostics as dg
import simplexrl.harness as hn
from simplexrl.cli import main as cli_main


class TestConfigParse:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        cfg = hn.config_parse(str(path))
        assert cfg.algorithm == "td3"
        assert cfg.head.kind == "baseline"
        assert cfg.seeds == [0]

    def test_file_values_then_cli_overrides(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("algorithm: ppo\nenv: gridworld\nhead:\n  kind: sem\n  V: 8\n")
        cfg = hn.config_parse(str(path), {"head.V": "16", "head.L": "32"})
        assert cfg.algorithm == "ppo"
        assert cfg.head.kind == "sem"
        assert cfg.head.V == 16 and cfg.head.L == 32

    def test_unknown_key_named_in_error(self):
        with pytest.raises(hn.ConfigError, match="bogus"):
            hn.config_parse(None, {"bogus": 1})

    def test_type_mismatch_names_expected_type(self):
        with pytest.raises(hn.ConfigError, match="int"):
            hn.config_parse(None, {"total_steps": "many"})

    def test_head_v_zero_rejected(self):
        with pytest.raises(hn.ConfigError):
            hn.config_parse(None, {"head.V": "0"})

    def test_seeds_parse_from_comma_list(self):
        cfg = hn.config_parse(None, {"seeds": "0,1,2"})
        assert cfg.seeds == [0, 1, 2]

    def test_bool_coercion(self):
        cfg = hn.config_parse(None, {"use_cdq": "false", "stationary": "true"})
        assert cfg.use_cdq is False and cfg.stationary is True


class TestCsvLogger:
    def _row(self, step, **kw):
        return dg.MetricsRow(step=step, **kw)

    def test_header_written_exactly_once(self, tmp_path):
        path = str(tmp_path / "m.csv")
        with hn.CsvLogger(path) as logger:
            logger.log(self._row(0, eval_return=1.0))
            logger.log(self._row(1, eval_return=2.0))
        lines = open(path).read().splitlines()
        assert lines[0] == ",".join(dg.METRICS_COLUMNS)
        assert sum(1 for line in lines if line.startswith("step")) == 1

    def test_null_is_empty_field_not_nan(self, tmp_path):
        path = str(tmp_path / "m.csv")
        with hn.CsvLogger(path) as logger:
            logger.log(self._row(0))
        data_line = open(path).read().splitlines()[1]
        assert "nan" not in data_line.lower()
        assert data_line == "0" + "," * (len(dg.METRICS_COLUMNS) - 1)

    def test_round_trip_nine_significant_digits(self, tmp_path):
        path = str(tmp_path / "m.csv")
        value = 1.2345678901234e-3
        with hn.CsvLogger(path) as logger:
            logger.log(self._row(0, eval_return=value, gini=0.87654321999))
        cols = hn.read_metrics_csv(path)
        assert cols["eval_return"][0] == pytest.approx(value, rel=1e-9)
        assert cols["gini"][0] == pytest.approx(0.87654321999, rel=1e-9)

    def test_file_materialized_atomically(self, tmp_path):
        path = str(tmp_path / "m.csv")
        logger = hn.CsvLogger(path)
        logger.log(self._row(0))
        assert not os.path.exists(path)  # only the temp file exists mid-run
        logger.close()
        assert os.path.exists(path) and not os.path.exists(path + ".tmp")


class TestMatrixExpansion:
    def test_cell_count_is_product_of_axes(self):
        cfg = hn.config_parse(None, {})
        cfg.sweep = {"head.V": [4, 16], "sigma_explore": [0.1, 0.2, 0.4]}
        cells = hn._cell_overrides(cfg)
        assert len(cells) == 6
        labels = [label for label, _ in cells]
        assert len(set(labels)) == 6

    def test_no_sweep_single_default_cell(self):
        cfg = hn.config_parse(None, {})
        assert hn._cell_overrides(cfg) == [("default", {})]


class TestRunExperiment:
    def _fast_overrides(self, out):
        return {
            "algorithm": "nonstat", "seeds": "0,1", "epochs": "2",
            "hidden": "16", "out_dir": out,
        }

    def test_artifacts_per_cell(self, tmp_path):
        out = str(tmp_path / "exp")
        cfg = hn.config_parse(None, self._fast_overrides(out))
        cfg.sweep = {"head.kind": ["baseline", "crelu"]}
        status = hn.run_experiment(cfg)
        assert status == 0
        csvs = [os.path.join(r, f) for r, _, fs in os.walk(out)
                for f in fs if f == "metrics.csv"]
        assert len(csvs) == 4  # 2 seeds x 2 heads
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert len(summary["cells"]) == 2

    def test_summary_mean_matches_hand_average(self, tmp_path):
        out = str(tmp_path / "exp")
        cfg = hn.config_parse(None, self._fast_overrides(out))
        hn.run_experiment(cfg)
        summary = json.load(open(os.path.join(out, "summary.json")))
        finals = []
        for seed in (0, 1):
            cols = hn.read_metrics_csv(
                os.path.join(out, "default", f"seed{seed}", "metrics.csv"))
            finals.append(cols["eval_return"][-1])
        cell = summary["cells"]["default"]
        assert cell["final_return_mean"] == pytest.approx(np.mean(finals), rel=1e-12)

    def test_rerun_byte_identical_csvs(self, tmp_path):
        blobs = []
        for sub in ("a", "b"):
            out = str(tmp_path / sub)
            cfg = hn.config_parse(None, self._fast_overrides(out))
            cfg.seeds = [0]
            hn.run_experiment(cfg)
            blobs.append(open(os.path.join(out, "default", "seed0",
                                           "metrics.csv"), "rb").read())
        assert blobs[0] == blobs[1]

    def test_manifest_written_and_finalized(self, tmp_path):
        out = str(tmp_path / "exp")
        cfg = hn.config_parse(None, self._fast_overrides(out))
        cfg.seeds = [0]
        hn.run_experiment(cfg)
        manifest = json.load(open(os.path.join(out, "default", "seed0",
                                               "manifest.json")))
        assert manifest["status"] == "ok"
        assert manifest["seed"] == 0
        assert manifest["ended"] is not None


class TestCli:
    def test_config_error_exit_code_2(self, capsys):
        assert cli_main(["train-td3", "--bogus", "1"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_config_file_exit_code_2(self):
        assert cli_main(["train-td3", "--config", "/nonexistent.yaml"]) == 2

    def test_demo_nonstat_end_to_end(self, tmp_path):
        out = str(tmp_path / "run")
        code = cli_main(["demo-nonstat", "--seed", "0", "--out", out,
                         "--epochs", "2", "--hidden", "16"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "summary.json"))

    def test_sweep_requires_axes(self):
        assert cli_main(["sweep", "--out", "/tmp/x"]) == 2

    def test_summarize_subcommand(self, tmp_path):
        out = str(tmp_path / "run")
        cli_main(["demo-nonstat", "--seed", "0", "--out", out,
                  "--epochs", "2", "--hidden", "16"])
        os.remove(os.path.join(out, "summary.json"))
        assert cli_main(["summarize", "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "summary.json"))
