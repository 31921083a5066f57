import pytest

from app import models
from app.database import get_db_session, init_db
from app.models import STATUS_FAILED, STATUS_FINISHED, RunRecord


@pytest.fixture
def registry():
    init_db()


def test_record_lifecycle(registry):
    with get_db_session() as db:
        record = RunRecord.create(db, run_dir="/tmp/run", command="fit", model="static", seed=5)
        record_id = record.id
    with get_db_session() as db:
        record = RunRecord.get_by_id(db, record_id)
        record.finish(12.5)
    with get_db_session() as db:
        record = RunRecord.get_by_id(db, record_id)
        assert record.status == STATUS_FINISHED
        assert record.wall_time == 12.5
        assert record.seed == "5"
        assert record.finished_at is not None


def test_failed_record(registry):
    with get_db_session() as db:
        record = RunRecord.create(db, run_dir="/tmp/run", command="refit", model="dynamic2", seed=1)
        record.fail("boom")
    with get_db_session() as db:
        (record,) = RunRecord.get_recent(db)
        assert record.status == STATUS_FAILED
        assert record.error_message == "boom"


def test_pruning_keeps_newest(registry, monkeypatch):
    monkeypatch.setattr(models, "MAX_RUN_RECORDS", 3)
    for seed in range(5):
        with get_db_session() as db:
            RunRecord.create(db, run_dir=f"/tmp/run{seed}", command="fit", model="static", seed=seed)
    with get_db_session() as db:
        recent = RunRecord.get_recent(db, limit=10)
        assert [r.seed for r in recent] == ["4", "3", "2"]
