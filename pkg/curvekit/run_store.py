import json

from sqlalchemy import delete, select
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import Session

from curvekit.db_models import ExperimentRun, ReplicationRecord, utc_now
from curvekit.schemas import ReplicationResult


def get_run_by_key(db: Session, run_key: str) -> ExperimentRun | None:
    stmt = select(ExperimentRun).where(ExperimentRun.run_key == run_key)
    return db.execute(stmt).scalar_one_or_none()


def create_or_get_run(
    db: Session,
    *,
    run_key: str,
    experiment: str,
    trigger_source: str,
    config: dict[str, object],
) -> tuple[ExperimentRun, bool]:
    run = ExperimentRun(
        run_key=run_key,
        experiment=experiment,
        trigger_source=trigger_source,
        status="queued",
        config=json.dumps(config, sort_keys=True),
    )
    db.add(run)
    try:
        db.commit()
    except IntegrityError:
        # Unique run_key enforces idempotent run creation.
        db.rollback()
        existing = get_run_by_key(db, run_key)
        if existing:
            return existing, False
        raise

    db.refresh(run)
    return run, True


def reset_run_state(db: Session, run: ExperimentRun, *, config: dict[str, object]) -> None:
    db.execute(delete(ReplicationRecord).where(ReplicationRecord.run_id == run.id))

    run.status = "queued"
    run.error = None
    run.completed_at = None
    run.report_path = None
    run.failure_count = 0
    run.config = json.dumps(config, sort_keys=True)
    db.commit()


def mark_run_running(db: Session, run: ExperimentRun) -> None:
    run.status = "running"
    run.started_at = utc_now()
    run.error = None
    db.commit()


def mark_run_succeeded(db: Session, run: ExperimentRun, *, report_path: str, failure_count: int) -> None:
    run.status = "succeeded"
    run.report_path = report_path
    run.failure_count = failure_count
    run.completed_at = utc_now()
    run.error = None
    db.commit()


def mark_run_failed(db: Session, run: ExperimentRun, *, error: str) -> None:
    run.status = "failed"
    run.error = error
    run.completed_at = utc_now()
    db.commit()


def store_replications(db: Session, *, run_id: int, replications: list[ReplicationResult]) -> None:
    for replication in replications:
        db.add(
            ReplicationRecord(
                run_id=run_id,
                estimator=replication.estimator,
                case_label=replication.case,
                replication_index=replication.index,
                status=replication.status,
                detail=json.dumps(replication.detail, sort_keys=True),
                values=json.dumps(replication.values, sort_keys=True),
                error=replication.error,
            )
        )
    db.commit()


def load_replications(db: Session, *, run_id: int) -> list[ReplicationResult]:
    stmt = (
        select(ReplicationRecord)
        .where(ReplicationRecord.run_id == run_id)
        .order_by(ReplicationRecord.id)
    )
    return [
        ReplicationResult(
            estimator=record.estimator,
            case=record.case_label,
            index=record.replication_index,
            status=record.status,
            detail=json.loads(record.detail),
            values=json.loads(record.values),
            error=record.error,
        )
        for record in db.execute(stmt).scalars()
    ]
