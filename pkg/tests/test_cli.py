"""
Tests for the command-line entry point.
"""

import json

import pandas as pd
import pytest

from app.database.connection import get_db_session
from app.services.outputs import MANIFEST_NAME, SUMMARY_NAME, RunManifest, verify_outputs
from app.services.runs import STATUS_COMPLETED, STATUS_FAILED, RunService
from cli.main import build_parser, main


def summary_of(out_dir):
    return json.loads((out_dir / SUMMARY_NAME).read_text())


def latest_run(command):
    with get_db_session() as db:
        record = RunService(db).list_runs(command=command, limit=1)[0]
        return record.status, record.output_dir


class TestParser:
    """Tests for argument parsing."""

    def test_subcommands(self):
        """Test that every subcommand is registered."""
        parser = build_parser()
        for command in ("validate", "cancellative", "qc", "golden", "simulate", "duality", "coalesce", "drift", "rescale", "runs"):
            args = parser.parse_args([command])
            assert args.command == command

    def test_unknown_subcommand(self):
        """Test that argparse exits with status 2."""
        with pytest.raises(SystemExit) as excinfo:
            main(["plot"])
        assert excinfo.value.code == 2


class TestAlgebraCommands:
    """Tests for validate, cancellative, qc and golden."""

    def test_golden(self, tmp_path):
        """Test that golden writes its tables, summary, manifest and run log."""
        out = tmp_path / "golden"
        assert main(["golden", "--out", str(out)]) == 0
        assert len(pd.read_csv(out / "alpha_prime.csv")) == 7
        manifest = RunManifest.read(out / MANIFEST_NAME)
        assert all(verify_outputs(manifest, out).values())
        assert (out / "run.log").exists()
        assert latest_run("golden") == (STATUS_COMPLETED, str(out))

    def test_empty_config(self, tmp_path):
        """Test that a command needing configuration exits with status 2."""
        assert main(["qc", "--out", str(tmp_path / "qc")]) == 2

    def test_qc(self, tmp_path):
        """Test q_c(4) = 0 and the alpha curve for a single n."""
        out = tmp_path / "qc"
        assert main(["qc", "--n", "4", "--out", str(out)]) == 0
        assert pd.read_csv(out / "qc.csv")["q_c"].tolist() == [0.0]
        assert len(pd.read_csv(out / "alpha_curve.csv")) == 101

    def test_cancellative(self, tmp_path):
        """Test a certificate with round trips."""
        out = tmp_path / "cancellative"
        assert main(["cancellative", "--n", "4", "--q", "0.5", "--roundtrip", "3", "--out", str(out)]) == 0
        summary = summary_of(out)
        assert summary["cancellative"] is True
        assert summary["schema_version"] == 1
        assert len(pd.read_csv(out / "roundtrip.csv")) == 3

    def test_validate_family(self, tmp_path):
        """Test validation of the q-voter family on the nearest-neighbour preset."""
        out = tmp_path / "validate"
        assert main(["validate", "--preset", "nn", "--family", "qvoter", "--out", str(out)]) == 0
        family = summary_of(out)["family"]
        assert family["complement_symmetric"] is True
        assert family["monotone"] is True

    def test_asymmetric_neighbourhood_fails(self, tmp_path):
        """Test that a kernel axiom failure exits with status 3 and marks the run failed."""
        config = tmp_path / "bad.ini"
        config.write_text("[neighbourhood]\ndim = 2\nsites = (1,0) (0,1)\n")
        assert main(["validate", "--config", str(config), "--out", str(tmp_path / "bad")]) == 3
        assert latest_run("validate")[0] == STATUS_FAILED


class TestSimulationCommands:
    """Tests for simulate and duality."""

    def test_simulate(self, tmp_path):
        """Test single runs of the voter model from a block."""
        out = tmp_path / "simulate"
        assert main(["simulate", "--horizon", "0.5", "--replicates", "2", "--out", str(out)]) == 0
        rows = pd.read_csv(out / "runs.csv")
        assert rows["replicate"].tolist() == [0, 1]
        assert (out / "events.bin").exists()

    def test_simulate_killing(self, tmp_path):
        """Test the killed coupling reports ordering checks."""
        out = tmp_path / "killing"
        assert main(["simulate", "--mode", "killing", "--horizon", "0.5", "--out", str(out)]) == 0
        assert set(pd.read_csv(out / "runs.csv")["component"]) == {"killed", "unkilled"}

    def test_duality(self, tmp_path):
        """Test exact duality cases on the 2 x 2 torus."""
        out = tmp_path / "duality"
        assert main(["duality", "--torus", "2", "--t", "0.5", "--cases", "3", "--out", str(out)]) == 0
        summary = summary_of(out)
        assert summary["cases"] == 3
        assert summary["max_discrepancy"] < 1e-9

    def test_oracle_limit(self, tmp_path):
        """Test that a torus beyond the oracle limit exits with status 2."""
        assert main(["duality", "--torus", "4", "--cases", "1", "--out", str(tmp_path / "big")]) == 2


class TestRunsCommand:
    """Tests for the runs listing."""

    def test_lists_runs(self, tmp_path, capsys):
        """Test that archived runs are printed."""
        main(["golden", "--out", str(tmp_path / "g")])
        assert main(["runs", "--command", "golden", "--limit", "1", "--estimates"]) == 0
        assert "golden" in capsys.readouterr().out


class TestEstimationCommands:
    """Tests for coalesce, drift and rescale."""

    def test_coalesce_theta(self, tmp_path):
        """Test Theta tables with exact identities and a stored kappa estimate."""
        out = tmp_path / "theta"
        argv = ["coalesce", "--task", "theta", "--horizon", "5", "--replicates", "20", "--out", str(out)]
        assert main(argv) == 0
        summary = summary_of(out)
        assert summary["linear_residual"] == 0
        assert summary["constant_residual"] == 0
        assert len(pd.read_csv(out / "theta_tables.csv")) == 15
        with get_db_session() as db:
            service = RunService(db)
            run_id = service.list_runs(command="coalesce", limit=1)[0].run_id
            assert [e.name for e in service.get_estimates(run_id)] == ["kappa"]

    def test_drift(self, tmp_path):
        """Test Theta_2 and Theta_3 for the q-voter family."""
        out = tmp_path / "drift"
        argv = ["drift", "--family", "qvoter", "--horizon", "5", "--replicates", "20", "--out", str(out)]
        assert main(argv) == 0
        names = pd.read_csv(out / "drift.csv")["name"].tolist()
        assert names == ["Theta_2", "Theta_3", "kappa"]

    def test_rescale_params(self, tmp_path):
        """Test the scaling table for two values of N."""
        out = tmp_path / "params"
        assert main(["rescale", "--n-grid", "1e4 1e5", "--out", str(out)]) == 0
        table = pd.read_csv(out / "scaling.csv")
        assert table["N"].tolist() == [1e4, 1e5]

    def test_rescale_decompose(self, tmp_path):
        """Test that the rate decomposition closes."""
        out = tmp_path / "decompose"
        assert main(["rescale", "--task", "decompose", "--n-grid", "1e4", "--out", str(out)]) == 0
        assert summary_of(out)["residuals"]["10000.0"] < 1e-6
