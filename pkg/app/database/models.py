"""
SQLAlchemy database models for the run registry.
"""

from datetime import datetime, timezone
from sqlalchemy import (
    Column,
    Integer,
    String,
    Text,
    DateTime,
    Float,
    ForeignKey,
    JSON,
)
from sqlalchemy.orm import relationship, DeclarativeBase


class Base(DeclarativeBase):
    """Base class for all models."""
    pass


class RunRecord(Base):
    """One CLI run: what was asked, with which seed, and how it ended."""

    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(64), unique=True, nullable=False, index=True)
    command = Column(String(50), nullable=False, index=True)
    status = Column(String(20), nullable=False)  # started, completed, failed
    seed = Column(Integer, nullable=True)
    config = Column(JSON, nullable=True)  # section -> key -> value snapshot
    code_version = Column(String(50), nullable=True)
    started_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
    completed_at = Column(DateTime, nullable=True)
    error_message = Column(Text, nullable=True)
    output_digests = Column(JSON, nullable=True)  # file name -> sha256
    output_dir = Column(String(500), nullable=True)

    # Relationships
    estimates = relationship("EstimateRecord", back_populates="run", cascade="all, delete-orphan")


class EstimateRecord(Base):
    """A Monte Carlo estimate produced by a run."""

    __tablename__ = "estimates"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String(64), ForeignKey("runs.run_id"), nullable=False, index=True)
    name = Column(String(100), nullable=False)
    value = Column(Float, nullable=False)
    std_error = Column(Float, nullable=True)
    samples = Column(Integer, default=0)
    horizon = Column(Float, nullable=True)
    log_power = Column(Integer, default=0)

    # Relationships
    run = relationship("RunRecord", back_populates="estimates")
