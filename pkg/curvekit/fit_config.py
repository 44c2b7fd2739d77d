"""Estimator hyperparameters: module defaults, then a JSON file, then command-line flags."""

from dataclasses import asdict, dataclass, field, fields, replace
import json
from pathlib import Path

from curvekit.errors import ValidationError
from curvekit.kernel_ridge import KernelParams, KrConfig
from curvekit.metrics import DEFAULT_GRID, TenorGrid
from curvekit.neural import TrainConfig
from curvekit.nss import NssConfig


ESTIMATORS: tuple[str, ...] = ("bootstrap", "ns", "nss", "kr", "nn")
CONFIG_KEYS = ("estimator", "nss", "kr", "nn", "grid")


@dataclass(frozen=True)
class FitConfig:
    estimator: str = "nss"
    nss: NssConfig = field(default_factory=NssConfig)
    kr: KrConfig = field(default_factory=KrConfig)
    nn: TrainConfig = field(default_factory=TrainConfig)
    grid: TenorGrid = DEFAULT_GRID

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}", field="estimator")

    def to_dict(self) -> dict[str, object]:
        return {
            "estimator": self.estimator,
            "nss": {**asdict(self.nss), "lambda_bounds": list(self.nss.lambda_bounds)},
            "kr": {"lambda": self.kr.lam, "a": self.kr.kernel.a, "b": self.kr.kernel.b},
            "nn": self.nn.to_dict(),
            "grid": list(self.grid.tenors),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object], base: "FitConfig | None" = None) -> "FitConfig":
        base = base or cls()
        unknown = set(payload) - set(CONFIG_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}", field="config")
        return apply_overrides(
            base,
            estimator=payload.get("estimator"),
            nss=_section(payload, "nss"),
            kr=_section(payload, "kr"),
            nn=_section(payload, "nn"),
            grid=payload.get("grid"),  # type: ignore[arg-type]
        )


def _section(payload: dict[str, object], key: str) -> dict[str, object]:
    section = payload.get(key) or {}
    if not isinstance(section, dict):
        raise ValidationError(f"'{key}' must be an object", field=key)
    return section


def _replace_checked(config: object, overrides: dict[str, object], section: str) -> object:
    allowed = {f.name for f in fields(config)}  # type: ignore[arg-type]
    unknown = set(overrides) - allowed
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}", field=section)
    try:
        return replace(config, **overrides)  # type: ignore[type-var]
    except TypeError as exc:
        raise ValidationError(str(exc), field=section) from exc


def apply_overrides(
    config: FitConfig,
    *,
    estimator: object = None,
    nss: dict[str, object] | None = None,
    kr: dict[str, object] | None = None,
    nn: dict[str, object] | None = None,
    grid: list[float] | None = None,
) -> FitConfig:
    """Return a copy with every non-None override applied on top of ``config``."""
    nss = {k: v for k, v in (nss or {}).items() if v is not None}
    kr = {k: v for k, v in (kr or {}).items() if v is not None}
    nn = {k: v for k, v in (nn or {}).items() if v is not None}

    kr_config = config.kr
    if kr:
        unknown = set(kr) - {"lambda", "a", "b"}
        if unknown:
            raise ValidationError(f"unknown keys {sorted(unknown)}", field="kr")
        kernel = KernelParams(
            a=float(kr.get("a", config.kr.kernel.a)),  # type: ignore[arg-type]
            b=float(kr.get("b", config.kr.kernel.b)),  # type: ignore[arg-type]
        )
        kr_config = KrConfig(lam=float(kr.get("lambda", config.kr.lam)), kernel=kernel)  # type: ignore[arg-type]

    return FitConfig(
        estimator=str(estimator) if estimator is not None else config.estimator,
        nss=_replace_checked(config.nss, nss, "nss") if nss else config.nss,  # type: ignore[arg-type]
        kr=kr_config,
        nn=_replace_checked(config.nn, nn, "nn") if nn else config.nn,  # type: ignore[arg-type]
        grid=TenorGrid(tuple(grid)) if grid is not None else config.grid,
    )


def load_fit_config(path: str | Path | None) -> FitConfig:
    if path is None:
        return FitConfig()
    path = Path(path)
    with path.open("r", encoding="utf-8") as infile:
        try:
            payload = json.load(infile)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config JSON in {path}: {exc}", field="config") from exc
    if not isinstance(payload, dict):
        raise ValidationError("config root must be an object", field="config")
    return FitConfig.from_dict(payload)
