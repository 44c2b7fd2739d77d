from datetime import datetime, timezone

UTC = timezone.utc
import logging

from apscheduler.schedulers.blocking import BlockingScheduler
from sqlalchemy.orm import Session, sessionmaker

from curvekit.config import Settings
from curvekit.fit_config import load_fit_config
from curvekit.runner import run_daily


logger = logging.getLogger(__name__)


def _run_daily_fit(settings: Settings, session_factory: sessionmaker[Session]) -> None:
    run_date = datetime.now(UTC).date()
    try:
        result = run_daily(settings, session_factory, run_date, fit_config=load_fit_config(settings.fit_config_path))
    except Exception:
        logger.error("scheduled curve run failed", extra={"run_date": run_date.isoformat()})
        return
    logger.info(
        "scheduled curve run completed",
        extra={
            "run_key": result.run_key,
            "status": result.status,
            "failures": result.failure_count,
            "reused_existing_run": result.reused_existing_run,
        },
    )


def start_scheduler(settings: Settings, session_factory: sessionmaker[Session], *, run_now: bool = False) -> None:
    scheduler = BlockingScheduler(timezone="UTC")
    scheduler.add_job(
        _run_daily_fit,
        "cron",
        args=[settings, session_factory],
        hour=settings.schedule_hour_utc,
        minute=settings.schedule_minute_utc,
        id="daily_curve_fit",
        replace_existing=True,
    )

    logger.info(
        "scheduler started",
        extra={
            "schedule_hour_utc": settings.schedule_hour_utc,
            "schedule_minute_utc": settings.schedule_minute_utc,
            "estimators": list(settings.daily_estimators),
        },
    )

    if run_now:
        _run_daily_fit(settings, session_factory)

    scheduler.start()
