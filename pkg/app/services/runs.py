"""
Run Service - Registry of CLI runs and the estimates they produced.

Handles:
- Recording run start, completion and failure
- Storing estimates per run
- Listing archived runs
"""

from datetime import datetime, timezone
from typing import Any, Iterable, List, Optional
from uuid import uuid4

from sqlalchemy import desc
from sqlalchemy.orm import Session

from app.database.models import EstimateRecord, RunRecord
from app.errors import ToolkitError
from app.logging_config import get_logger
from app.services.estimators import DriftEstimate

logger = get_logger(__name__)

STATUS_STARTED = "started"
STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"


def new_run_id(command: str) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    return f"{command}-{stamp}-{uuid4().hex[:8]}"


class RunService:
    """Service for bookkeeping of experiment runs in the database."""

    def __init__(self, db: Session):
        """
        Initialize the run service.

        Args:
            db: Database session
        """
        self.db = db

    def start_run(
        self,
        command: str,
        seed: Optional[int],
        config: Optional[dict[str, Any]] = None,
        code_version: Optional[str] = None,
        output_dir: Optional[str] = None,
        run_id: Optional[str] = None,
    ) -> RunRecord:
        """
        Register a new run in the started state.

        Args:
            command: CLI subcommand name
            seed: Master seed
            config: Experiment config snapshot
            code_version: Package version string
            output_dir: Where the run writes its files
            run_id: Explicit id (generated when omitted)

        Returns:
            The persisted RunRecord
        """
        record = RunRecord(
            run_id=run_id or new_run_id(command),
            command=command,
            status=STATUS_STARTED,
            seed=seed,
            config=config,
            code_version=code_version,
            output_dir=output_dir,
        )
        self.db.add(record)
        self.db.commit()
        logger.info(f"Run {record.run_id} started ({command}, seed={seed})")
        return record

    def _get(self, run_id: str) -> RunRecord:
        record = self.db.query(RunRecord).filter(RunRecord.run_id == run_id).first()
        if record is None:
            raise ToolkitError(f"Unknown run {run_id}", exit_code=2)
        return record

    def complete_run(self, run_id: str, output_digests: Optional[dict[str, str]] = None) -> RunRecord:
        """
        Mark a run as completed.

        Args:
            run_id: Run identifier
            output_digests: File name -> SHA-256 of every output written

        Returns:
            Updated RunRecord
        """
        record = self._get(run_id)
        record.status = STATUS_COMPLETED
        record.completed_at = datetime.now(timezone.utc)
        record.output_digests = output_digests
        self.db.commit()
        logger.info(f"Run {run_id} completed ({len(output_digests or {})} files)")
        return record

    def fail_run(self, run_id: str, error_message: str) -> RunRecord:
        """Mark a run as failed with the error that stopped it."""
        record = self._get(run_id)
        record.status = STATUS_FAILED
        record.completed_at = datetime.now(timezone.utc)
        record.error_message = error_message
        self.db.commit()
        logger.error(f"Run {run_id} failed: {error_message}")
        return record

    def record_estimates(self, run_id: str, estimates: Iterable[DriftEstimate]) -> int:
        """
        Store estimates produced by a run.

        Args:
            run_id: Run identifier
            estimates: Estimates to persist (named)

        Returns:
            Count of rows inserted
        """
        self._get(run_id)
        count = 0
        for estimate in estimates:
            self.db.add(
                EstimateRecord(
                    run_id=run_id,
                    name=estimate.name,
                    value=float(estimate.value),
                    std_error=float(estimate.std_error),
                    samples=int(estimate.samples),
                    horizon=float(estimate.horizon),
                    log_power=int(estimate.log_power),
                )
            )
            count += 1
        self.db.commit()
        logger.info(f"Stored {count} estimates for run {run_id}")
        return count

    def list_runs(self, command: Optional[str] = None, status: Optional[str] = None, limit: int = 50) -> List[RunRecord]:
        """
        Archived runs, newest first.

        Args:
            command: Optional subcommand filter
            status: Optional status filter (started, completed, failed)
            limit: Maximum number of results
        """
        query = self.db.query(RunRecord)
        if command:
            query = query.filter(RunRecord.command == command)
        if status:
            query = query.filter(RunRecord.status == status)
        return query.order_by(desc(RunRecord.started_at), desc(RunRecord.id)).limit(limit).all()

    def get_estimates(self, run_id: str) -> List[EstimateRecord]:
        return (
            self.db.query(EstimateRecord)
            .filter(EstimateRecord.run_id == run_id)
            .order_by(EstimateRecord.id)
            .all()
        )
