from collections.abc import Callable
from datetime import date
import logging
from pathlib import Path

from sqlalchemy.orm import Session, sessionmaker

from curvekit.config import Settings
from curvekit.db_models import ExperimentRun
from curvekit.errors import CurveKitError
from curvekit.estimators import build_estimators
from curvekit.fit_config import FitConfig
from curvekit.market_data import MarketSnapshot
from curvekit.metrics import rmse_ytm
from curvekit.reports import EvaluationReport, write_curve_samples, write_model, write_report
from curvekit.retry import run_with_retries
from curvekit.run_store import (
    create_or_get_run,
    mark_run_failed,
    mark_run_running,
    mark_run_succeeded,
    reset_run_state,
    store_replications,
)
from curvekit.schemas import ExperimentResult, ReplicationResult
from curvekit.snapshot_io import load_snapshot


logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Runs one experiment under a run key and records it in the ledger.

    A key that already exists is reset and run again, except that a succeeded run
    is returned untouched when ``reuse_succeeded`` is set (scheduled runs).
    """

    def __init__(self, settings: Settings, session_factory: sessionmaker[Session]) -> None:
        self.settings = settings
        self.session_factory = session_factory

    def run(
        self,
        *,
        experiment: str,
        run_key: str,
        execute: Callable[[], EvaluationReport],
        config: dict[str, object],
        trigger_source: str = "manual",
        reuse_succeeded: bool = False,
        report_dir: str | Path | None = None,
    ) -> tuple[ExperimentResult, EvaluationReport | None]:
        with self.session_factory() as db:
            run, created = create_or_get_run(
                db,
                run_key=run_key,
                experiment=experiment,
                trigger_source=trigger_source,
                config=config,
            )
            if not created:
                if run.status == "succeeded" and reuse_succeeded:
                    logger.info("idempotent run reused", extra={"run_key": run_key, "status": run.status})
                    return self._result_from_run(run, reused_existing_run=True), None
                logger.info("rerunning existing run key", extra={"run_key": run_key, "status": run.status})
                reset_run_state(db, run, config=config)

            mark_run_running(db, run)
            try:
                report = execute()
                json_path, _ = write_report(report, self._report_dir(report_dir), run_key)
                store_replications(db, run_id=run.id, replications=report.replications)
                mark_run_succeeded(db, run, report_path=str(json_path), failure_count=report.failure_count)
            except Exception as exc:
                mark_run_failed(db, run, error=str(exc))
                logger.exception("experiment run failed", extra={"run_key": run_key, "experiment": experiment})
                raise

            logger.info(
                "experiment run finished",
                extra={"run_key": run_key, "experiment": experiment, "failures": report.failure_count},
            )
            return self._result_from_run(run, reused_existing_run=False), report

    def _report_dir(self, report_dir: str | Path | None) -> Path:
        return Path(report_dir) if report_dir is not None else Path(self.settings.output_dir) / "reports"

    def _result_from_run(self, run: ExperimentRun, reused_existing_run: bool) -> ExperimentResult:
        return ExperimentResult(
            run_id=run.id,
            run_key=run.run_key,
            experiment=run.experiment,
            trigger_source=run.trigger_source,
            status=run.status,
            failure_count=run.failure_count,
            report_path=run.report_path,
            error=run.error,
            reused_existing_run=reused_existing_run,
        )


class DailyCurveJob:
    """Loads one day's snapshot and fits every configured estimator on it."""

    def __init__(self, settings: Settings, fit_config: FitConfig | None = None) -> None:
        self.settings = settings
        self.fit_config = fit_config or FitConfig()

    def snapshot_path(self, run_date: date) -> Path:
        return Path(self.settings.input_dir) / f"snapshot-{run_date.isoformat()}.json"

    def load(self, run_date: date) -> MarketSnapshot:
        path = self.snapshot_path(run_date)

        def log_failure(attempt: int, exc: Exception) -> None:
            logger.warning("snapshot load failed", extra={"path": str(path), "attempt": attempt, "error": str(exc)})

        # The feed may land late; only a missing file is worth waiting for.
        return run_with_retries(
            lambda: load_snapshot(path, "json"),
            max_retries=self.settings.max_load_retries,
            backoff_seconds=self.settings.retry_backoff_seconds,
            on_attempt_failure=log_failure,
            should_retry=lambda exc: isinstance(exc, FileNotFoundError),
        )

    def __call__(self, run_date: date) -> EvaluationReport:
        snapshot = self.load(run_date)
        day = run_date.isoformat()
        curve_dir = Path(self.settings.output_dir) / "curves" / day
        estimators = build_estimators(list(self.settings.daily_estimators), self.fit_config)
        report = EvaluationReport(
            "daily",
            provenance={"date": day, "config": self.fit_config.to_dict(), "estimators": [e.name for e in estimators]},
        )
        for estimator in estimators:
            try:
                curve = estimator(snapshot)
                write_curve_samples(curve, snapshot.benchmark, curve_dir / f"{estimator.name}.csv", self.fit_config.grid)
                write_model(
                    curve_dir / f"{estimator.name}.json",
                    estimator=estimator.name,
                    date=day,
                    curve=curve,
                    config=self.fit_config.to_dict(),
                )
                value = rmse_ytm(curve, snapshot)
            except CurveKitError as exc:
                logger.warning("daily fit failed", extra={"estimator": estimator.name, "date": day, "error": str(exc)})
                report.replications.append(
                    ReplicationResult(estimator.name, day, 0, "failed", detail={"date": day}, error=str(exc))
                )
                report.add(estimator.name, "rmse_ytm", None, case=day)
                continue
            report.replications.append(
                ReplicationResult(estimator.name, day, 0, "ok", detail={"date": day}, values={"rmse_ytm": value})
            )
            report.add(estimator.name, "rmse_ytm", value, case=day)
        return report


def run_daily(
    settings: Settings,
    session_factory: sessionmaker[Session],
    run_date: date,
    *,
    fit_config: FitConfig | None = None,
    trigger_source: str = "scheduled",
) -> ExperimentResult:
    job = DailyCurveJob(settings, fit_config)
    runner = ExperimentRunner(settings, session_factory)
    result, _ = runner.run(
        experiment="daily",
        run_key=f"{trigger_source}-{run_date.isoformat()}",
        execute=lambda: job(run_date),
        config={"date": run_date.isoformat(), "fit": job.fit_config.to_dict(), "estimators": list(settings.daily_estimators)},
        trigger_source=trigger_source,
        reuse_succeeded=trigger_source == "scheduled",
    )
    return result
