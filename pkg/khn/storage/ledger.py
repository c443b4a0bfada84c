"""SQLite run ledger."""

import uuid
from datetime import datetime, timezone
from typing import Optional

from sqlmodel import Field, Session, SQLModel, create_engine, select

from khn.models.schemas import EvaluationMetrics, IterationMetrics, RunConfig


def _now() -> datetime:
    return datetime.now(timezone.utc)


def new_run_id(prefix: str = "run") -> str:
    return f"{prefix}_{uuid.uuid4().hex[:8]}"


# Database models
class RunRecord(SQLModel, table=True):
    """One CLI invocation that trained or evaluated a model."""

    __tablename__ = "runs"

    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: str = Field(unique=True, index=True)
    command: str  # "train", "eval"
    output_dir: str
    seed: int
    status: str = "running"  # "running", "finished", "failed"
    checkpoint_path: Optional[str] = None
    final_loss: Optional[float] = None
    created_at: datetime = Field(default_factory=_now)
    updated_at: datetime = Field(default_factory=_now)
    config_json: str  # JSON serialized RunConfig


class IterationRecord(SQLModel, table=True):
    """Training loss of one iteration."""

    __tablename__ = "iterations"

    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: str = Field(index=True)
    iteration: int
    loss: float
    wall_ms: float


class EvaluationRecord(SQLModel, table=True):
    """Summary of one evaluation."""

    __tablename__ = "evaluations"

    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: str = Field(index=True)
    iteration: Optional[int] = None
    episode_count: int
    mean_accuracy: float
    ci95_halfwidth: float
    finetuned: bool = False
    created_at: datetime = Field(default_factory=_now)


class RunLedger:
    """Records runs, their loss curves and evaluations in SQLite."""

    def __init__(self, db_url: str):
        """
        Initialize the ledger.

        Args:
            db_url: Database URL, e.g. sqlite:///runs/ledger.db
        """
        self.db_url = db_url
        self.engine = create_engine(self.db_url, echo=False)
        SQLModel.metadata.create_all(self.engine)

    def start_run(self, run_id: str, command: str, config: RunConfig, output_dir: str):
        with Session(self.engine) as session:
            session.add(
                RunRecord(
                    run_id=run_id,
                    command=command,
                    output_dir=output_dir,
                    seed=config.seed,
                    config_json=config.model_dump_json(),
                )
            )
            session.commit()

    def finish_run(
        self,
        run_id: str,
        status: str = "finished",
        checkpoint_path: Optional[str] = None,
        final_loss: Optional[float] = None,
    ):
        with Session(self.engine) as session:
            record = session.exec(select(RunRecord).where(RunRecord.run_id == run_id)).first()
            if record is None:
                return
            record.status = status
            record.checkpoint_path = checkpoint_path
            record.final_loss = final_loss
            record.updated_at = _now()
            session.add(record)
            session.commit()

    def log_iterations(self, run_id: str, rows: list[IterationMetrics]):
        """Save a batch of iteration rows in one transaction."""
        with Session(self.engine) as session:
            for row in rows:
                session.add(
                    IterationRecord(
                        run_id=run_id, iteration=row.iteration, loss=row.loss, wall_ms=row.wall_ms
                    )
                )
            session.commit()

    def log_evaluation(self, run_id: str, metrics: EvaluationMetrics):
        with Session(self.engine) as session:
            session.add(EvaluationRecord(run_id=run_id, **metrics.model_dump()))
            session.commit()

    def load_run(self, run_id: str) -> Optional[RunRecord]:
        with Session(self.engine) as session:
            return session.exec(select(RunRecord).where(RunRecord.run_id == run_id)).first()

    def list_runs(self, limit: Optional[int] = None) -> list[RunRecord]:
        with Session(self.engine) as session:
            statement = select(RunRecord).order_by(RunRecord.created_at, RunRecord.id)
            if limit:
                statement = statement.limit(limit)
            return list(session.exec(statement).all())

    def load_iterations(self, run_id: str) -> list[IterationRecord]:
        with Session(self.engine) as session:
            statement = (
                select(IterationRecord)
                .where(IterationRecord.run_id == run_id)
                .order_by(IterationRecord.iteration)
            )
            return list(session.exec(statement).all())

    def load_evaluations(self, run_id: str) -> list[EvaluationRecord]:
        with Session(self.engine) as session:
            statement = (
                select(EvaluationRecord)
                .where(EvaluationRecord.run_id == run_id)
                .order_by(EvaluationRecord.id)
            )
            return list(session.exec(statement).all())
