"""Evaluation reports and curve samples as JSON and flat CSV files."""

from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

UTC = timezone.utc
import json
from pathlib import Path

import numpy as np
import pandas as pd

from curvekit.curves import YieldCurve
from curvekit.metrics import DEFAULT_GRID, FULL, TenorGrid
from curvekit.schemas import ReplicationResult, ReportRow


REPORT_COLUMNS = ["experiment", "estimator", "case", "bucket", "metric", "value", "seed"]
SAMPLE_COLUMNS = ["sampling", "label", "tenor", "yield", "benchmark_yield"]
DENSE_STEP = 0.1
DENSE_HORIZON = 30.0


def write_json(path: Path, payload: dict[str, object]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as outfile:
        json.dump(payload, outfile, indent=2, sort_keys=True)
        outfile.write("\n")


def generated_at() -> str:
    return datetime.now(UTC).isoformat(timespec="seconds")


@dataclass
class EvaluationReport:
    """Rows of one experiment plus the replications they were aggregated from."""

    experiment: str
    rows: list[ReportRow] = field(default_factory=list)
    replications: list[ReplicationResult] = field(default_factory=list)
    provenance: dict[str, object] = field(default_factory=dict)

    @property
    def estimators(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.estimator, None)
        for replication in self.replications:
            seen.setdefault(replication.estimator, None)
        return list(seen)

    @property
    def failure_count(self) -> int:
        return sum(1 for replication in self.replications if not replication.ok)

    def add(
        self,
        estimator: str,
        metric: str,
        value: float | None,
        *,
        case: str = "",
        bucket: str = FULL,
        seed: int | None = None,
    ) -> None:
        self.rows.append(
            ReportRow(
                experiment=self.experiment,
                estimator=estimator,
                case=case,
                bucket=bucket,
                metric=metric,
                value=None if value is None else float(value),
                seed=seed,
            )
        )

    def value(self, estimator: str, metric: str, *, case: str = "", bucket: str = FULL) -> float | None:
        for row in self.rows:
            if (row.estimator, row.metric, row.case, row.bucket) == (estimator, metric, case, bucket):
                return row.value
        raise KeyError(f"no {metric} row for {estimator} case '{case}' bucket '{bucket}'")

    def metrics(self, estimator: str, *, case: str = "", bucket: str = FULL) -> dict[str, float | None]:
        return {
            row.metric: row.value
            for row in self.rows
            if row.estimator == estimator and row.case == case and row.bucket == bucket
        }

    def cases(self, estimator: str) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            if row.estimator == estimator:
                seen.setdefault(row.case, None)
        return list(seen)

    def to_dict(self, *, timestamp: str | None = None) -> dict[str, object]:
        return {
            "experiment": self.experiment,
            "estimators": self.estimators,
            "failure_count": self.failure_count,
            "provenance": self.provenance,
            "rows": [asdict(row) for row in self.rows],
            "replications": [asdict(replication) for replication in self.replications],
            "metadata": {"generated_at": timestamp or generated_at()},
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "EvaluationReport":
        return cls(
            experiment=str(payload["experiment"]),
            rows=[ReportRow(**row) for row in payload.get("rows", [])],  # type: ignore[union-attr]
            replications=[ReplicationResult(**rep) for rep in payload.get("replications", [])],  # type: ignore[union-attr]
            provenance=dict(payload.get("provenance", {})),  # type: ignore[arg-type]
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=REPORT_COLUMNS)


def write_report(report: EvaluationReport, directory: str | Path, stem: str) -> tuple[Path, Path]:
    directory = Path(directory)
    json_path = directory / f"{stem}.json"
    csv_path = directory / f"{stem}.csv"
    write_json(json_path, report.to_dict())
    report.to_frame().to_csv(csv_path, index=False, lineterminator="\n")
    return json_path, csv_path


def dense_tenors() -> np.ndarray:
    steps = int(round(DENSE_HORIZON / DENSE_STEP))
    return np.round(np.arange(1, steps + 1) * DENSE_STEP, 10)


def sample_curve(curve: YieldCurve, benchmark: YieldCurve, grid: TenorGrid = DEFAULT_GRID) -> pd.DataFrame:
    """Yields on the metric grid followed by a dense sampling for plotting."""
    dense = dense_tenors()
    frames = [
        pd.DataFrame(
            {
                "sampling": "grid",
                "label": list(grid.labels),
                "tenor": grid.array,
                "yield": curve.yields(grid.array),
                "benchmark_yield": benchmark.yields(grid.array),
            }
        ),
        pd.DataFrame(
            {
                "sampling": "dense",
                "label": [f"{t:.1f}Y" for t in dense],
                "tenor": dense,
                "yield": curve.yields(dense),
                "benchmark_yield": benchmark.yields(dense),
            }
        ),
    ]
    return pd.concat(frames, ignore_index=True)[SAMPLE_COLUMNS]


def write_curve_samples(curve: YieldCurve, benchmark: YieldCurve, path: Path, grid: TenorGrid = DEFAULT_GRID) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    sample_curve(curve, benchmark, grid).to_csv(path, index=False, lineterminator="\n")
    return path


def write_model(
    path: Path,
    *,
    estimator: str,
    date: str,
    curve: YieldCurve,
    config: dict[str, object],
    timestamp: str | None = None,
) -> Path:
    write_json(
        path,
        {
            "estimator": estimator,
            "date": date,
            "model": curve.to_dict(),
            "config": config,
            "metadata": {"generated_at": timestamp or generated_at()},
        },
    )
    return path
