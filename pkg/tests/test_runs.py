"""
Tests for the run registry service.
"""

from pathlib import Path

import pytest

from app.database.connection import get_db, init_db, sqlite_path
from app.database.models import EstimateRecord, RunRecord
from app.errors import ToolkitError
from app.services.estimators import DriftEstimate
from app.services.runs import STATUS_COMPLETED, STATUS_FAILED, STATUS_STARTED, RunService, new_run_id


@pytest.fixture
def db_session():
    """Get a test database session."""
    init_db()
    db = next(get_db())
    yield db
    db.close()


@pytest.fixture
def clean_test_runs(db_session):
    """Clean up test runs before and after tests."""

    def clean():
        db_session.query(EstimateRecord).filter(EstimateRecord.run_id.like("test_%")).delete(synchronize_session=False)
        db_session.query(RunRecord).filter(RunRecord.run_id.like("test_%")).delete(synchronize_session=False)
        db_session.commit()

    clean()
    yield
    clean()


class TestRunService:
    """Tests for RunService."""

    def test_new_run_id(self):
        """Test that run ids carry the command and are unique."""
        first, second = new_run_id("golden"), new_run_id("golden")
        assert first.startswith("golden-")
        assert first != second

    def test_start_and_complete(self, db_session, clean_test_runs):
        """Test the started -> completed transition with digests."""
        service = RunService(db_session)
        record = service.start_run("golden", 7, {"experiment": {"n": "4"}}, "0.1.0", "/tmp/out", run_id="test_run_1")
        assert record.status == STATUS_STARTED
        done = service.complete_run("test_run_1", {"summary.json": "abc"})
        assert done.status == STATUS_COMPLETED
        assert done.completed_at is not None
        assert done.output_digests == {"summary.json": "abc"}

    def test_fail(self, db_session, clean_test_runs):
        """Test that a failed run keeps its error message."""
        service = RunService(db_session)
        service.start_run("coalesce", 1, run_id="test_run_2")
        record = service.fail_run("test_run_2", "too few samples")
        assert record.status == STATUS_FAILED
        assert record.error_message == "too few samples"

    def test_unknown_run(self, db_session):
        """Test that an unknown run id is a usage error."""
        with pytest.raises(ToolkitError) as excinfo:
            RunService(db_session).complete_run("test_missing")
        assert excinfo.value.exit_code == 2

    def test_estimates(self, db_session, clean_test_runs):
        """Test storing and reading estimates in insertion order."""
        service = RunService(db_session)
        service.start_run("coalesce", 3, run_id="test_run_3")
        estimates = [
            DriftEstimate(value=0.5, std_error=0.01, samples=100, horizon=1e3, log_power=1, name="K_2"),
            DriftEstimate(value=1.25, std_error=0.1, samples=100, horizon=1e3, log_power=3, name="kappa"),
        ]
        assert service.record_estimates("test_run_3", estimates) == 2
        stored = service.get_estimates("test_run_3")
        assert [e.name for e in stored] == ["K_2", "kappa"]
        assert stored[1].log_power == 3

    def test_list_runs_filters(self, db_session, clean_test_runs):
        """Test filtering by command and status."""
        service = RunService(db_session)
        service.start_run("qc", 1, run_id="test_run_4")
        service.start_run("qc", 2, run_id="test_run_5")
        service.complete_run("test_run_5")
        completed = [r.run_id for r in service.list_runs(command="qc", status=STATUS_COMPLETED)]
        assert "test_run_5" in completed
        assert "test_run_4" not in completed


class TestSqlitePath:
    """Tests for locating the registry file."""

    def test_file_url(self):
        """Test that a file URL maps to its path."""
        assert sqlite_path("sqlite:////tmp/vmp/runs.db") == Path("/tmp/vmp/runs.db")

    def test_memory_and_other_backends(self):
        """Test that in-memory and server URLs have no file."""
        assert sqlite_path("sqlite:///:memory:") is None
        assert sqlite_path("postgresql://localhost/runs") is None
