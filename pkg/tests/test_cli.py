"""Tests for CSV ingestion and the command-line front end."""

import json
from unittest.mock import patch

import numpy as np
import pytest

from mllab.base import (
    ConfigError,
    DatasetError,
    EmptyFileError,
    NonFiniteValueError,
    NotPositiveDefiniteError,
    ParseError,
)
from mllab.cli import EXIT_FAILED, EXIT_INPUT, EXIT_OK, ingest_csv, main, parse_grid, run_command
from mllab.models import Command, RunConfig


def _body(path):
    return json.loads(path.read_text())["body"]


@pytest.mark.unit
class TestIngestCsv:
    """Tests for CSV ingestion."""

    def test_single_row(self, write_csv):
        """Test a header and one row give N = 1, D = 1."""
        d = ingest_csv(str(write_csv("x,y\n0.0,1.0\n")))
        assert (d.n, d.d) == (1, 1)
        assert d.y.tolist() == [1.0]

    def test_three_columns(self, write_csv):
        """Test three columns give D = 2 with the last column as target."""
        d = ingest_csv(str(write_csv("a,b,y\n1,2,3\n4,5,6\n")))
        assert d.d == 2
        assert d.X.tolist() == [[1.0, 2.0], [4.0, 5.0]]
        assert d.y.tolist() == [3.0, 6.0]

    def test_non_numeric_cell(self, write_csv):
        """Test a non-numeric cell names row 2, column 1."""
        with pytest.raises(ParseError) as exc_info:
            ingest_csv(str(write_csv("x,y\nabc,1.0\n")))
        assert (exc_info.value.row, exc_info.value.column) == (2, 1)

    def test_ragged_row(self, write_csv):
        """Test a row with a missing cell is refused."""
        with pytest.raises(ParseError) as exc_info:
            ingest_csv(str(write_csv("x,y\n1.0,2.0\n3.0\n")))
        assert exc_info.value.row == 3

    def test_non_finite_cell(self, write_csv):
        """Test NaN cells are refused with their location."""
        with pytest.raises(NonFiniteValueError) as exc_info:
            ingest_csv(str(write_csv("x,y\n1.0,nan\n")))
        assert (exc_info.value.row, exc_info.value.column) == (2, 2)

    def test_header_only(self, write_csv):
        """Test a file without data rows raises EmptyFileError."""
        with pytest.raises(EmptyFileError):
            ingest_csv(str(write_csv("x,y\n")))
        with pytest.raises(EmptyFileError):
            ingest_csv(str(write_csv("")))

    def test_blank_lines_skipped(self, write_csv):
        """Test blank lines between rows are ignored."""
        assert ingest_csv(str(write_csv("x,y\n1,2\n\n3,4\n"))).n == 2

    def test_single_column(self, write_csv):
        """Test a file without a target column is refused."""
        with pytest.raises(DatasetError):
            ingest_csv(str(write_csv("y\n1\n")))

    def test_missing_file(self, tmp_path):
        """Test an unreadable path raises DatasetError."""
        with pytest.raises(DatasetError):
            ingest_csv(str(tmp_path / "missing.csv"))


@pytest.mark.unit
class TestParseGrid:
    """Tests for grid strings."""

    def test_log(self):
        """Test a log grid."""
        assert parse_grid("0.1:10:log:3") == pytest.approx([0.1, 1.0, 10.0])

    def test_lin(self):
        """Test a linear grid."""
        assert parse_grid("1:3:lin:3") == pytest.approx([1.0, 2.0, 3.0])

    @pytest.mark.parametrize("spec", ["1:2:log", "a:2:log:3", "2:1:log:3", "0:1:log:3", "1:2:cubic:3"])
    def test_invalid(self, spec):
        """Test malformed grids raise ConfigError."""
        with pytest.raises(ConfigError):
            parse_grid(spec)


@pytest.mark.unit
class TestRunCommand:
    """Tests for command execution and exit codes."""

    def test_missing_input_writes_nothing(self, tmp_path):
        """Test a missing CSV exits 2 without a report."""
        output = tmp_path / "fit.json"
        code = main(["fit", "--csv", str(tmp_path / "missing.csv"), "--output", str(output)])
        assert code == EXIT_INPUT
        assert not output.exists()

    def test_fit_scalar_argmax(self, tmp_path, write_csv):
        """Test fitting N = 1, y = [2] with a fixed lengthscale reaches sigma_f^2 = 4."""
        data = write_csv("x,y\n0.0,2.0\n")
        output = tmp_path / "fit.json"
        code = main(
            [
                "fit", "--csv", str(data), "--fix", "lengthscale", "--noise", "0",
                "--grad-tol", "1e-10", "--max-iters", "1000", "--output", str(output),
            ]
        )
        assert code == EXIT_OK
        body = _body(output)
        assert body["hyperparameters"]["signal_var"] == pytest.approx(4.0, abs=1e-6)
        assert body["trace"]["converged"] is True
        assert (tmp_path / "fit.trace.csv").exists()

    def test_fit_with_test_split(self, tmp_path):
        """Test a held-out fraction adds test metrics."""
        output = tmp_path / "fit.json"
        code = main(
            [
                "fit", "--synthetic", "sine", "--n", "20", "--test-fraction", "0.25",
                "--max-iters", "20", "--output", str(output),
            ]
        )
        assert code == EXIT_OK
        body = _body(output)
        assert body["test_metrics"] is not None
        assert body["dataset"]["n"] == 20

    def test_verify_random(self, tmp_path):
        """Test verify on 50 random instances passes with residuals below 1e-8."""
        output = tmp_path / "verify.json"
        assert main(["verify", "--random", "50", "--seed", "7", "--output", str(output)]) == EXIT_OK
        rows = _body(output)["rows"]
        assert len(rows) == 50
        assert max(row["equivalence_residual"] for row in rows) <= 1e-8

    def test_verify_without_data(self, tmp_path):
        """Test verify with neither data nor --random is an input error."""
        assert main(["verify", "--output", str(tmp_path / "v.json")]) == EXIT_INPUT

    def test_gradcheck_random(self, tmp_path):
        """Test the gradient check passes on random instances of both families."""
        output = tmp_path / "gradcheck.json"
        assert main(["gradcheck", "--random", "4", "--seed", "1", "--output", str(output)]) == EXIT_OK
        assert (tmp_path / "gradcheck.gradcheck.csv").exists()

    def test_gradcheck_failure_exits_one(self, tmp_path):
        """Test an unattainable tolerance exits 1 and still writes the report."""
        output = tmp_path / "gradcheck.json"
        code = main(
            ["gradcheck", "--random", "2", "--grad-tol-check", "1e-300", "--output", str(output)]
        )
        assert code == EXIT_FAILED
        assert output.exists()

    def test_sweep_grid(self, tmp_path):
        """Test a sweep writes one row per grid value."""
        output = tmp_path / "sweep.json"
        code = main(
            ["sweep", "--synthetic", "sine", "--n", "15", "--grid", "0.1:100:log:7", "--output", str(output)]
        )
        assert code == EXIT_OK
        body = _body(output)
        assert len(body["rows"]) == 7
        assert 0 <= body["argmax_row"] < 7

    def test_compare_rejects_csv(self, tmp_path, write_csv):
        """Test compare refuses a CSV source."""
        data = write_csv("x,y\n0,1\n1,2\n")
        assert main(["compare", "--csv", str(data), "--output", str(tmp_path / "c.json")]) == EXIT_INPUT

    def test_compare_small(self, tmp_path):
        """Test a tiny comparison runs every objective on every seed."""
        output = tmp_path / "compare.json"
        code = main(
            [
                "compare", "--synthetic", "sine", "--n", "12", "--net-widths", "3,2",
                "--max-iters", "2", "--seeds", "2", "--permutations", "2", "--output", str(output),
            ]
        )
        assert code == EXIT_OK
        runs = _body(output)["runs"]
        assert [run["seed"] for run in runs] == [0, 1]
        assert all(len(run["records"]) == 2 for run in runs)

    def test_config_rerun_reproduces_body(self, tmp_path):
        """Test re-running an embedded config gives the same config and body."""
        first = tmp_path / "first.json"
        second = tmp_path / "second.json"
        assert main(["verify", "--random", "6", "--seed", "3", "--output", str(first)]) == EXIT_OK
        assert main(["verify", "--config", str(first), "--output", str(second)]) == EXIT_OK
        a, b = json.loads(first.read_text()), json.loads(second.read_text())
        assert json.dumps(a["body"], sort_keys=True) == json.dumps(b["body"], sort_keys=True)
        a["config"].pop("output")
        b["config"].pop("output")
        assert a["config"] == b["config"]

    def test_config_command_mismatch(self, tmp_path):
        """Test a report config cannot be re-run under another command."""
        first = tmp_path / "first.json"
        assert main(["verify", "--random", "2", "--output", str(first)]) == EXIT_OK
        assert main(["gradcheck", "--config", str(first)]) == EXIT_INPUT

    def test_run_command_direct(self, tmp_path):
        """Test run_command with a config built in code."""
        cfg = RunConfig(command=Command.VERIFY, random=3, output=str(tmp_path / "r.json"))
        assert run_command(cfg) == EXIT_OK
        assert np.isfinite(_body(tmp_path / "r.json")["rows"][0]["sigma_f_hat_sq"])

    def test_numerical_failure_exits_one(self, tmp_path):
        """Test a numerical failure inside a command exits 1 without a report."""
        output = tmp_path / "fit.json"
        with patch("mllab.cli._dispatch", side_effect=NotPositiveDefiniteError("failed", n=3)):
            code = main(["fit", "--synthetic", "sine", "--n", "5", "--output", str(output)])
        assert code == EXIT_FAILED
        assert not output.exists()


@pytest.mark.slow
class TestCompareReproducibility:
    """Tests for the full-size deep-kernel comparison and its re-run."""

    def test_thirty_points_ten_seeds(self, tmp_path):
        """Test compare at N = 30 over 10 seeds has finite metrics and re-runs byte for byte."""
        first = tmp_path / "compare.json"
        second = tmp_path / "again.json"
        code = main(
            [
                "compare", "--synthetic", "sine", "--n", "30", "--seeds", "10",
                "--max-iters", "30", "--permutations", "3", "--output", str(first),
            ]
        )
        assert code == EXIT_OK
        runs = _body(first)["runs"]
        assert [run["seed"] for run in runs] == list(range(10))
        for run in runs:
            assert run["n_train"] + run["n_test"] == 30
            for record in run["records"]:
                assert np.isfinite(record["test_rmse"]) and np.isfinite(record["test_nlpd"])
                assert np.isfinite(record["mean_abs_offdiag_corr"])

        assert main(["compare", "--config", str(first), "--output", str(second)]) == EXIT_OK
        a, b = json.loads(first.read_text()), json.loads(second.read_text())
        assert json.dumps(a["body"], sort_keys=True) == json.dumps(b["body"], sort_keys=True)
        first_table = tmp_path / "compare.records.csv"
        second_table = tmp_path / "again.records.csv"
        assert first_table.read_bytes() == second_table.read_bytes()
