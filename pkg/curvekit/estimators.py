"""Named estimators: snapshot in, fitted curve out."""

from collections.abc import Callable
from dataclasses import dataclass, replace
import json
from pathlib import Path

from curvekit.curves import FlatCurve, InterpolatedCurve, SpreadCurve, YieldCurve
from curvekit.errors import ValidationError
from curvekit.fit_config import ESTIMATORS, FitConfig
from curvekit.kernel_ridge import KernelParams, KrModel, fit_kr
from curvekit.market_data import BenchmarkCurve, MarketSnapshot
from curvekit.neural import NnCurve, fit_nn
from curvekit.nss import NssCurve, NssParams, fit_nss, nss_objective
from curvekit.pricing import BootstrapCurve, BootstrapDiagnostic, bootstrap


@dataclass(frozen=True)
class Estimator:
    name: str
    fit: Callable[[MarketSnapshot], YieldCurve]

    def __call__(self, snapshot: MarketSnapshot) -> YieldCurve:
        return self.fit(snapshot)


def build_estimator(name: str, config: FitConfig | None = None) -> Estimator:
    config = config or FitConfig()
    if name == "bootstrap":
        return Estimator(name, bootstrap)
    if name in ("ns", "nss"):
        nss_config = replace(config.nss, svensson=name == "nss")

        def fit_parametric(snapshot: MarketSnapshot) -> YieldCurve:
            params = fit_nss(snapshot, nss_config)
            return NssCurve(params=params, objective=nss_objective(params, snapshot))

        return Estimator(name, fit_parametric)
    if name == "kr":
        return Estimator(name, lambda snapshot: fit_kr(snapshot, config.kr.lam, config.kr.kernel))
    if name == "nn":
        return Estimator(name, lambda snapshot: fit_nn(snapshot, config.nn))
    raise ValidationError(f"unknown estimator '{name}', expected one of {ESTIMATORS}", field="estimator")


def build_estimators(names: list[str], config: FitConfig | None = None) -> list[Estimator]:
    if not names:
        raise ValidationError("at least one estimator is required", field="estimators")
    return [build_estimator(name, config) for name in names]


def parse_names(raw: str) -> list[str]:
    names = [part.strip() for part in raw.split(",") if part.strip()]
    for name in names:
        if name not in ESTIMATORS:
            raise ValidationError(f"unknown estimator '{name}', expected one of {ESTIMATORS}", field="estimators")
    return names


def curve_from_dict(payload: dict[str, object]) -> YieldCurve:
    kind = payload.get("kind")
    try:
        if kind == "flat":
            return FlatCurve(float(payload["rate"]))  # type: ignore[arg-type]
        if kind == "interpolated":
            return InterpolatedCurve(payload["times"], payload["rates"])  # type: ignore[arg-type]
        if kind == "bootstrap":
            return BootstrapCurve(
                times=payload["knot_times"],  # type: ignore[arg-type]
                rates=payload["knot_yields"],  # type: ignore[arg-type]
                diagnostics=tuple(BootstrapDiagnostic(**d) for d in payload.get("diagnostics", [])),  # type: ignore[union-attr]
            )
        if kind == "nss":
            return NssCurve(params=NssParams(**payload["params"]), objective=payload.get("objective"))  # type: ignore[arg-type]
        if kind == "kr":
            return KrModel(
                anchor_times=payload["anchor_times"],  # type: ignore[arg-type]
                alphas=payload["alphas"],  # type: ignore[arg-type]
                lam=float(payload["lambda"]),  # type: ignore[arg-type]
                kernel_params=KernelParams(**payload["kernel_params"]),  # type: ignore[arg-type]
            )
        if kind == "nn":
            return NnCurve.from_dict(payload)
        if kind == "spread":
            return SpreadCurve(curve_from_dict(payload["base"]), float(payload["spread"]))  # type: ignore[arg-type]
        if kind == "benchmark":
            return BenchmarkCurve(payload["tenors"], payload["rates"])  # type: ignore[arg-type]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed {kind} model: {exc}", field="model") from exc
    raise ValidationError(f"unknown curve kind '{kind}'", field="kind")


def load_model(path: str | Path) -> YieldCurve:
    with Path(path).open("r", encoding="utf-8") as infile:
        payload = json.load(infile)
    return curve_from_dict(payload["model"])
