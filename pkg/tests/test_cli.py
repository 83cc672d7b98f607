import glob
import json
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from skewwalk.__main__ import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, exit_code, main
from skewwalk.config import config
from skewwalk.storage import load_path

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def write_config(tmp_path):
    """Write a run config dict to a temporary JSON file."""

    def _write(data: dict, name: str = "run.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return _write


def _only(pattern: str) -> str:
    matches = glob.glob(pattern)
    assert len(matches) == 1, matches
    return matches[0]


class TestExitCode:
    """Test exit code aggregation."""

    def test_codes(self):
        """Test pass, inconclusive and fail precedence."""
        assert exit_code(["pass", "pass"]) == EXIT_PASS
        assert exit_code(["pass", "inconclusive"]) == EXIT_INCONCLUSIVE
        assert exit_code(["inconclusive", "fail"]) == EXIT_FAIL
        assert exit_code([]) == EXIT_PASS


class TestParser:
    """Test the command-line surface."""

    def test_help(self, capsys):
        """Test --help lists the subcommands."""
        with pytest.raises(SystemExit) as e:
            main(["--help"])
        assert e.value.code == 0
        out = capsys.readouterr().out
        for command in ("simulate", "transform", "resolvent", "experiment", "report"):
            assert command in out

    def test_unknown_experiment(self, capsys):
        """Test argparse rejects unknown experiment names."""
        with pytest.raises(SystemExit) as e:
            main(["experiment", "nope"])
        assert e.value.code == 2


class TestExperimentCommand:
    """Test running experiments end to end."""

    def test_golden_report(self, output_dir):
        """Test the example config reproduces the golden headline numbers."""
        golden = json.loads((ROOT / "tests" / "golden" / "example_report.json").read_text())
        code = main(
            ["experiment", golden["experiment"], "--config", str(ROOT / golden["config"]),
             "--out", output_dir]
        )
        assert code == EXIT_PASS
        report = json.loads(Path(_only(os.path.join(output_dir, "*.json"))).read_text())
        assert report["verdict"] == golden["verdict"]
        for key, expected in golden["headline"].items():
            assert report["headline"][key] == pytest.approx(
                expected["value"], abs=expected["tolerance"]
            )
        assert os.path.exists(_only(os.path.join(output_dir, "*.csv")))

    def test_deterministic_modulo_timing(self, write_config, tmp_path):
        """Test two runs with one seed differ only in timestamp and runtime."""
        path = write_config(
            {
                "experiment": "local_time_scaling",
                "eta": {"eta_mode": "geometric"},
                "grids": {"n": [100, 1000]},
                "parameters": {"n_paths": 100},
                "seed": 7,
            }
        )
        reports = []
        for run in ("a", "b"):
            out = str(tmp_path / run)
            main(["experiment", "local_time_scaling", "--config", path, "--out", out])
            data = json.loads(Path(_only(os.path.join(out, "*.json"))).read_text())
            data.pop("timestamp")
            data.pop("runtime_s")
            data["config"].pop("output_dir")
            reports.append(data)
        assert reports[0] == reports[1]

    def test_seed_flag_overrides_file(self, write_config, output_dir):
        """Test --seed wins over the config file."""
        path = write_config({"experiment": "tail_functional_limit", "eta": {"beta": 0.5},
                             "grids": {"u": [1e4]}, "seed": 1})
        main(["experiment", "tail_functional_limit", "--config", path, "--seed", "5",
              "--out", output_dir])
        report = json.loads(Path(_only(os.path.join(output_dir, "*.json"))).read_text())
        assert report["seeds"] == [5]
        assert report["config"]["seed"] == 5

    def test_environment_output_dir(self, write_config, tmp_path, monkeypatch):
        """Test SKEWWALK_OUTPUT_DIR overrides the file but not --out."""
        env_dir = str(tmp_path / "from_env")
        monkeypatch.setattr(config, "output_dir", env_dir)
        path = write_config({"experiment": "tail_functional_limit", "eta": {"beta": 0.5},
                             "grids": {"u": [1e4]}, "output_dir": str(tmp_path / "from_file")})
        main(["experiment", "tail_functional_limit", "--config", path])
        assert glob.glob(os.path.join(env_dir, "*.json"))
        assert not os.path.exists(tmp_path / "from_file")


class TestMalformedConfig:
    """Test config validation at the command line."""

    def test_out_of_range_alpha(self, write_config, output_dir, capsys):
        """Test the error names the offending key path."""
        path = write_config({"xi": {"alpha": 2.5}, "experiment": "potter_bound"})
        code = main(["experiment", "potter_bound", "--config", path, "--out", output_dir])
        assert code == EXIT_FAIL
        err = capsys.readouterr().err
        assert "Invalid run config" in err
        assert "xi.alpha" in err

    def test_unknown_key(self, write_config, output_dir, capsys):
        """Test unknown keys are rejected."""
        path = write_config({"experiment": "potter_bound", "colour": "blue"})
        code = main(["experiment", "potter_bound", "--config", path, "--out", output_dir])
        assert code == EXIT_FAIL
        assert "colour" in capsys.readouterr().err

    def test_regime_mismatch(self, write_config, output_dir):
        """Test a skew-only experiment on a vanishing law fails cleanly."""
        path = write_config({"eta": {"eta_mode": "geometric"}, "grids": {"v": [1e2]}})
        code = main(["experiment", "skew_ratio_limit", "--config", path, "--out", output_dir])
        assert code == EXIT_FAIL


class TestOtherCommands:
    """Test simulate, transform, resolvent and report."""

    def test_simulate_writes_path(self, write_config, output_dir):
        """Test the binary dump and the CSV agree."""
        path = write_config({"parameters": {"n_steps": 500, "x0": 3}, "seed": 11})
        assert main(["simulate", "--config", path, "--out", output_dir]) == EXIT_PASS
        header, values = load_path(_only(os.path.join(output_dir, "*.bin")))
        table = pd.read_csv(_only(os.path.join(output_dir, "*.csv")))
        assert header["n"] == 501 and header["x0"] == 3 and header["seed"] == 11
        assert np.array_equal(values, table["X"].to_numpy())
        assert list(table.columns) == ["n", "X", "T"]

    def test_transform_table(self, write_config, output_dir):
        """Test the transform CSV columns and rows."""
        path = write_config({"grids": {"x": [0.5, 1.0], "v": [100.0], "lambda": [1.0]}})
        assert main(["transform", "--config", path, "--out", output_dir]) == EXIT_PASS
        table = pd.read_csv(_only(os.path.join(output_dir, "*.csv")))
        assert list(table.columns) == [
            "x", "lambda", "v", "value", "err_estimate", "gap", "method"
        ]
        assert len(table) == 4
        assert table["value"].between(0, 1).all()
        assert table["err_estimate"].between(0, 1e-4).all()
        assert (table["gap"] >= 0).all()
        discrete, stable = table.iloc[0::2], table.iloc[1::2]
        assert set(discrete["method"]) == {"discrete_scaled"} and set(stable["method"]) == {"stable"}
        gaps = np.abs(discrete["value"].to_numpy() - stable["value"].to_numpy())
        assert np.allclose(discrete["gap"], gaps) and np.allclose(stable["gap"], gaps)

    def test_transform_records_config(self, write_config, output_dir):
        """Test the transform table has a config sidecar with the seed."""
        path = write_config({"grids": {"x": [1.0], "v": [100.0], "lambda": [1.0]}, "seed": 42})
        assert main(["transform", "--config", path, "--out", output_dir]) == EXIT_PASS
        table = _only(os.path.join(output_dir, "transform_*.csv"))
        sidecar = json.loads(Path(table.replace(".csv", "_config.json")).read_text())
        assert sidecar["seed"] == 42
        assert sidecar["operation"] == "transform"
        assert sidecar["grids"]["lambda"] == [1.0]

    def test_resolvent_table(self, write_config, output_dir):
        """Test resolvent rows include the chain and its skew limit."""
        path = write_config(
            {
                "eta": {"eta_mode": "one_sided", "beta": 0.3},
                "grids": {"x": [1.0], "v": [100.0], "lambda": [1.0]},
                "parameters": {"v_proxy": 1e4, "test_functions": ["one", "gaussian"]},
            }
        )
        assert main(["resolvent", "--config", path, "--out", output_dir]) == EXIT_PASS
        table = pd.read_csv(_only(os.path.join(output_dir, "*.csv")))
        quantities = set(table["quantity"])
        assert {"V1", "lambda_R_one_0", "skew_lambda_R_gaussian_0"} <= quantities
        one = table[table["quantity"] == "lambda_R_one_0"]["value"]
        assert (one == 1.0).all()
        chain = table[table["quantity"] == "lambda_R_gaussian_0"]
        assert list(chain["method"]) == ["lattice"]
        assert (chain["err"] >= 0).all()
        sidecar = _only(os.path.join(output_dir, "resolvent_*_config.json"))
        assert json.loads(Path(sidecar).read_text())["eta"]["beta"] == 0.3

    def test_report_consolidates(self, output_dir, capsys):
        """Test report prints a table and returns the aggregated exit code."""
        golden = json.loads((ROOT / "tests" / "golden" / "example_report.json").read_text())
        main(["experiment", golden["experiment"], "--config", str(ROOT / golden["config"]),
              "--out", output_dir])
        report_path = _only(os.path.join(output_dir, "*.json"))
        capsys.readouterr()
        assert main(["report", report_path]) == EXIT_PASS
        assert "tail_functional_limit" in capsys.readouterr().out

    def test_report_empty(self, capsys):
        """Test report with no files."""
        assert main(["report"]) == EXIT_PASS
        assert "No reports." in capsys.readouterr().out

    def test_report_schema_mismatch(self, tmp_path):
        """Test reports from another schema version are refused."""
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": 99, "id": "x", "verdict": "pass"}))
        assert main(["report", str(path)]) == EXIT_FAIL
