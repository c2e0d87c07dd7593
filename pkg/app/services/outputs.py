"""
Output files written by a run: CSV tables, JSON summaries, event logs and
the run manifest.

Everything here is deterministic given its inputs: CSV floats use 17
significant digits, JSON keys are sorted, and the binary event log is a
fixed-width little-endian layout.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from app.errors import SimulationError, ToolkitError
from app.logging_config import get_logger
from app.services.simulator import EventLog

logger = get_logger(__name__)

OUTPUT_SCHEMA_VERSION = 1
PACKAGE_NAME = "voter-perturbation-toolkit"
FLOAT_FORMAT = "%.17g"

SUMMARY_NAME = "summary.json"
MANIFEST_NAME = "manifest.json"

EVENT_MAGIC = b"VMPEVT01"
# time, x, y, new bit: 17 bytes per record
EVENT_DTYPE = np.dtype([("time", "<f8"), ("x", "<i4"), ("y", "<i4"), ("bit", "i1")])
EVENT_COLUMNS = ["time", "x", "y", "bit"]


def code_version() -> str:
    try:
        return version(PACKAGE_NAME)
    except PackageNotFoundError:
        return "0+unknown"


def file_digest(path: Path) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return f"{value.numerator}/{value.denominator}"
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def to_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default, allow_nan=True) + "\n"


# CSV


def write_csv(rows: pd.DataFrame | Sequence[dict], path: Path, columns: Sequence[str]) -> Path:
    """
    Write a table with a fixed column order.

    Args:
        rows: DataFrame or list of row dicts
        path: Target file
        columns: Column order; missing columns are an error

    Returns:
        The path written
    """
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=list(columns))
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ToolkitError(f"CSV {path.name} is missing columns {missing}")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.loc[:, list(columns)].to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_summary(payload: dict, path: Path) -> Path:
    """JSON summary with the schema version stamped in."""
    document = dict(payload)
    document["schema_version"] = OUTPUT_SCHEMA_VERSION
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(document), encoding="utf-8")
    logger.info(f"Wrote summary {path}")
    return path


# Event logs


def event_records(log: EventLog, dim: int = 2) -> np.ndarray:
    if dim != 2:
        raise SimulationError(f"Event log records are planar (x, y); got dimension {dim}", exit_code=2)
    times, sites, bits = log.as_arrays(dim)
    records = np.empty(len(times), dtype=EVENT_DTYPE)
    records["time"] = times
    records["x"] = sites[:, 0]
    records["y"] = sites[:, 1]
    records["bit"] = bits
    return records


def write_event_log(log: EventLog, path: Path, dim: int = 2) -> Path:
    """
    Binary event log: 8-byte magic, then 17-byte records
    (float64 time, int32 x, int32 y, int8 new bit), little-endian.
    """
    records = event_records(log, dim)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(EVENT_MAGIC)
        f.write(records.tobytes())
    logger.info(f"Wrote {len(records)} events to {path}")
    return path


def read_event_log(path: Path) -> EventLog:
    raw = Path(path).read_bytes()
    if raw[: len(EVENT_MAGIC)] != EVENT_MAGIC:
        raise ToolkitError(f"{path} is not an event log (bad magic)", exit_code=2)
    body = raw[len(EVENT_MAGIC):]
    if len(body) % EVENT_DTYPE.itemsize:
        raise ToolkitError(f"{path} is truncated ({len(body)} payload bytes)", exit_code=2)
    records = np.frombuffer(body, dtype=EVENT_DTYPE)
    log = EventLog()
    for t, x, y, bit in zip(records["time"], records["x"], records["y"], records["bit"]):
        log.record(float(t), (int(x), int(y)), int(bit))
    return log


def write_event_csv(log: EventLog, path: Path, dim: int = 2) -> Path:
    records = event_records(log, dim)
    return write_csv(pd.DataFrame(records), path, EVENT_COLUMNS)


# Manifest


@dataclass
class RunManifest:
    """What is needed to reproduce a run and verify its files."""

    command: str
    seed: Optional[int]
    config: dict = field(default_factory=dict)
    code_version: str = field(default_factory=code_version)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    completed_at: Optional[str] = None
    workers: int = 1
    outputs: dict[str, str] = field(default_factory=dict)
    schema_version: int = OUTPUT_SCHEMA_VERSION

    def add_output(self, path: Path) -> None:
        self.outputs[path.name] = file_digest(path)

    def finish(self) -> None:
        self.completed_at = datetime.now(timezone.utc).isoformat()

    def reproducibility_key(self) -> dict:
        """Fields that determine estimator inputs (not timestamps or worker count)."""
        return {"command": self.command, "seed": self.seed, "config": self.config, "code_version": self.code_version}

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_NAME
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(to_json(asdict(self)), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def verify_outputs(manifest: RunManifest, out_dir: Path) -> dict[str, bool]:
    """Compare recorded digests against the files on disk."""
    return {
        name: (out_dir / name).exists() and file_digest(out_dir / name) == digest
        for name, digest in sorted(manifest.outputs.items())
    }
