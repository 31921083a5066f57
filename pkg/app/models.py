"""
Database models for the run registry.
One row per fit or refit, pruned to the most recent MAX_RUN_RECORDS.
"""

import logging
from datetime import datetime
from typing import List, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, desc
from sqlalchemy.orm import Session

from app.database import Base

logger = logging.getLogger(__name__)

# Maximum number of run records to keep
MAX_RUN_RECORDS = 500

STATUS_RUNNING = "running"
STATUS_FINISHED = "finished"
STATUS_FAILED = "failed"


class RunRecord(Base):
    """
    Registry entry for one sampler run.
    Automatically prunes to keep only the last MAX_RUN_RECORDS entries.
    """
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True, index=True)
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)
    finished_at = Column(DateTime, nullable=True)
    run_dir = Column(String(1024), nullable=False)
    command = Column(String(32), nullable=False)  # fit, refit
    model = Column(String(16), nullable=False)
    seed = Column(String(32), nullable=False)
    status = Column(String(16), default=STATUS_RUNNING, nullable=False)  # running, finished, failed
    wall_time = Column(Float, nullable=True)
    error_message = Column(Text, nullable=True)

    def __repr__(self):
        return f"<RunRecord(id={self.id}, command='{self.command}', run_dir='{self.run_dir}', status='{self.status}')>"

    @classmethod
    def create(
        cls,
        db: Session,
        run_dir: str,
        command: str,
        model: str,
        seed: int,
    ) -> "RunRecord":
        """Create a running entry and prune old entries."""
        record = cls(run_dir=run_dir, command=command, model=model, seed=str(seed), status=STATUS_RUNNING)
        db.add(record)
        db.flush()  # Get the ID

        cls.prune_old_entries(db)
        return record

    def finish(self, wall_time: float) -> None:
        self.status = STATUS_FINISHED
        self.finished_at = datetime.utcnow()
        self.wall_time = wall_time

    def fail(self, error_message: str) -> None:
        self.status = STATUS_FAILED
        self.finished_at = datetime.utcnow()
        self.error_message = error_message

    @classmethod
    def prune_old_entries(cls, db: Session) -> int:
        """Remove oldest entries to keep only MAX_RUN_RECORDS."""
        count = db.query(cls).count()
        if count > MAX_RUN_RECORDS:
            entries_to_delete = (
                db.query(cls.id)
                .order_by(cls.started_at.asc(), cls.id.asc())
                .limit(count - MAX_RUN_RECORDS)
                .all()
            )
            ids_to_delete = [e.id for e in entries_to_delete]

            if ids_to_delete:
                db.query(cls).filter(cls.id.in_(ids_to_delete)).delete(synchronize_session=False)
                logger.info(f"Pruned {len(ids_to_delete)} old run records")
                return len(ids_to_delete)
        return 0

    @classmethod
    def get_recent(cls, db: Session, limit: int = 20) -> List["RunRecord"]:
        """Get the most recent run records."""
        return (
            db.query(cls)
            .order_by(desc(cls.started_at), desc(cls.id))
            .limit(limit)
            .all()
        )

    @classmethod
    def get_by_id(cls, db: Session, record_id: int) -> Optional["RunRecord"]:
        return db.query(cls).filter(cls.id == record_id).first()
