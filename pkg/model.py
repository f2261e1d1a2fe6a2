import enum
from datetime import datetime
from typing import List, Optional

from sqlalchemy import JSON, Boolean, DateTime, Enum as SqlEnum, Float, ForeignKey, Integer, String
from sqlalchemy.orm import Mapped, mapped_column, relationship
from sqlalchemy.sql import func

from database import Base


class RunStatus(str, enum.Enum):
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class Run(Base):
    """One CLI invocation."""

    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    command: Mapped[str] = mapped_column(String(32), index=True, nullable=False)
    master_seed: Mapped[Optional[int]] = mapped_column(Integer, nullable=True)
    version: Mapped[str] = mapped_column(String(16), nullable=False)
    status: Mapped[RunStatus] = mapped_column(SqlEnum(RunStatus), nullable=False, default=RunStatus.RUNNING)
    out_dir: Mapped[str] = mapped_column(String(1024), nullable=False)
    manifest_path: Mapped[Optional[str]] = mapped_column(String(1024), nullable=True)
    started_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), server_default=func.now(), nullable=False)
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime(timezone=True), nullable=True)

    evaluations: Mapped[List["Evaluation"]] = relationship(back_populates="run", cascade="all, delete-orphan")
    metrics: Mapped[List["MetricsRecord"]] = relationship(back_populates="run", cascade="all, delete-orphan")


class Evaluation(Base):
    """Provenance of one evaluated individual of a tuning run."""

    __tablename__ = "evaluations"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.id"), index=True, nullable=False)
    generation: Mapped[int] = mapped_column(Integer, nullable=False)
    index: Mapped[int] = mapped_column(Integer, nullable=False)
    genes: Mapped[list] = mapped_column(JSON, nullable=False)
    f: Mapped[float] = mapped_column(Float, nullable=False)
    f_raw: Mapped[float] = mapped_column(Float, nullable=False)
    penalized: Mapped[bool] = mapped_column(Boolean, default=False, nullable=False)
    energy: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    pdr: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    error: Mapped[Optional[str]] = mapped_column(String(500), nullable=True)

    run: Mapped["Run"] = relationship(back_populates="evaluations")


class MetricsRecord(Base):
    __tablename__ = "metrics_records"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(Integer, ForeignKey("runs.id"), index=True, nullable=False)
    scenario_id: Mapped[str] = mapped_column(String(255), nullable=False)
    config_id: Mapped[str] = mapped_column(String(255), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    metrics: Mapped[dict] = mapped_column(JSON, nullable=False)

    run: Mapped["Run"] = relationship(back_populates="metrics")
