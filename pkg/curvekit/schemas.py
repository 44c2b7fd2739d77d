from dataclasses import dataclass, field


@dataclass(frozen=True)
class ReplicationResult:
    estimator: str
    case: str
    index: int
    status: str
    detail: dict[str, object] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    estimator: str
    case: str
    bucket: str
    metric: str
    value: float | None
    seed: int | None = None


@dataclass(frozen=True)
class ExperimentResult:
    run_id: int
    run_key: str
    experiment: str
    trigger_source: str
    status: str
    failure_count: int
    report_path: str | None
    error: str | None
    reused_existing_run: bool
