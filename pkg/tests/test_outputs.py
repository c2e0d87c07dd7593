"""
Tests for output files and the run manifest.
"""

import json
from fractions import Fraction

import pandas as pd
import pytest

from app.errors import SimulationError, ToolkitError
from app.services.outputs import (
    EVENT_MAGIC,
    MANIFEST_NAME,
    OUTPUT_SCHEMA_VERSION,
    RunManifest,
    read_csv,
    read_event_log,
    to_json,
    verify_outputs,
    write_csv,
    write_event_csv,
    write_event_log,
    write_summary,
)
from app.services.simulator import EventLog


@pytest.fixture
def event_log():
    """Three flips on Z^2."""
    log = EventLog()
    log.record(0.125, (0, 0), 1)
    log.record(0.5, (-3, 7), 0)
    log.record(1.75, (2, -1), 1)
    return log


class TestCsv:
    """Tests for CSV tables and JSON summaries."""

    def test_column_order(self, tmp_path):
        """Test that columns follow the given order."""
        path = write_csv([{"b": 2.0, "a": 1}], tmp_path / "t.csv", ["a", "b"])
        frame = read_csv(path)
        assert list(frame.columns) == ["a", "b"]
        assert frame.loc[0, "b"] == 2.0

    def test_full_precision(self, tmp_path):
        """Test that floats survive the CSV with 17 digits."""
        value = 0.1 + 0.2
        frame = read_csv(write_csv(pd.DataFrame({"x": [value]}), tmp_path / "x.csv", ["x"]))
        assert frame.loc[0, "x"] == value

    def test_missing_column(self, tmp_path):
        """Test that a missing column is an error."""
        with pytest.raises(ToolkitError):
            write_csv(pd.DataFrame({"a": [1]}), tmp_path / "m.csv", ["a", "b"])

    def test_summary_schema_version(self, tmp_path):
        """Test that summaries are stamped and keys sorted."""
        path = write_summary({"z": 1, "a": 2}, tmp_path / "summary.json")
        document = json.loads(path.read_text())
        assert document["schema_version"] == OUTPUT_SCHEMA_VERSION
        assert list(document) == sorted(document)

    def test_json_fractions(self):
        """Test that exact rationals serialise as n/d strings."""
        assert json.loads(to_json({"x": Fraction(3, 4)})) == {"x": "3/4"}


class TestEventLog:
    """Tests for the binary event log."""

    def test_write_read(self, tmp_path, event_log):
        """Test that the binary log reproduces every record."""
        path = write_event_log(event_log, tmp_path / "events.bin")
        assert path.read_bytes()[:8] == EVENT_MAGIC
        assert path.stat().st_size == 8 + 3 * 17
        back = read_event_log(path)
        assert back.times == event_log.times
        assert back.sites == event_log.sites
        assert back.bits == event_log.bits

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is refused."""
        path = tmp_path / "foreign.bin"
        path.write_bytes(b"NOTALOG!" + bytes(17))
        with pytest.raises(ToolkitError):
            read_event_log(path)

    def test_truncated(self, tmp_path, event_log):
        """Test that a partial record is refused."""
        path = write_event_log(event_log, tmp_path / "events.bin")
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ToolkitError) as excinfo:
            read_event_log(path)
        assert excinfo.value.exit_code == 2

    def test_planar_only(self, tmp_path):
        """Test that three-dimensional events are refused."""
        log = EventLog()
        log.record(0.1, (0, 0, 0), 1)
        with pytest.raises(SimulationError):
            write_event_log(log, tmp_path / "e.bin", dim=3)

    def test_event_csv(self, tmp_path, event_log):
        """Test the CSV rendering of the event log."""
        frame = read_csv(write_event_csv(event_log, tmp_path / "events.csv"))
        assert list(frame.columns) == ["time", "x", "y", "bit"]
        assert frame["y"].tolist() == [0, 7, -1]


class TestManifest:
    """Tests for RunManifest."""

    def test_write_read(self, tmp_path):
        """Test that a manifest round-trips through JSON."""
        manifest = RunManifest(command="golden", seed=7, config={"experiment": {"n": "4"}})
        manifest.finish()
        path = manifest.write(tmp_path)
        assert path.name == MANIFEST_NAME
        back = RunManifest.read(path)
        assert back == manifest
        assert back.reproducibility_key() == manifest.reproducibility_key()

    def test_verify_outputs(self, tmp_path):
        """Test digest verification against modified files."""
        manifest = RunManifest(command="golden", seed=1)
        first = write_summary({"a": 1}, tmp_path / "summary.json")
        second = write_csv([{"x": 1}], tmp_path / "x.csv", ["x"])
        manifest.add_output(first)
        manifest.add_output(second)
        second.write_text("x\n2\n")
        assert verify_outputs(manifest, tmp_path) == {"summary.json": True, "x.csv": False}

    def test_key_ignores_workers(self):
        """Test that the reproducibility key does not depend on workers."""
        a = RunManifest(command="coalesce", seed=3, workers=1)
        b = RunManifest(command="coalesce", seed=3, workers=8)
        assert a.reproducibility_key() == b.reproducibility_key()
