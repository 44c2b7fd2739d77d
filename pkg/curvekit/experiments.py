"""Robustness, stability and out-of-sample protocols over one or more estimators.

Every protocol draws its random choices once from the seed, before looping over
estimators, so all estimators see the same perturbations. Fit failures become
failed replications and are left out of the averages.
"""

from collections.abc import Mapping, Sequence
from dataclasses import replace
import itertools
import logging
import math

import numpy as np
import pandas as pd

from curvekit.curves import YieldCurve
from curvekit.errors import ComputationError, CurveKitError, ValidationError
from curvekit.estimators import Estimator
from curvekit.market_data import MarketSnapshot
from curvekit.metrics import (
    BUCKETS,
    DEFAULT_GRID,
    DEFAULT_HIT_THRESHOLD,
    FULL,
    TenorGrid,
    bucket_of,
    hit_rate,
    mad_curve,
    rmse_curve,
    rmse_curve_by_bucket,
    rmse_ytm,
)
from curvekit.neural import NnCurve, TrainConfig, train
from curvekit.pricing import present_value, yield_to_maturity, ytm_array
from curvekit.reports import EvaluationReport
from curvekit.schemas import ReplicationResult


logger = logging.getLogger(__name__)

DEFAULT_BUMPS: tuple[float, ...] = (0.03, 0.05, 0.10)
DEFAULT_DROP_COUNTS: tuple[int, ...] = (1, 5, 10)
SERIES_TENORS: tuple[tuple[str, float], ...] = (("6M", 0.5), ("2Y", 2.0), ("10Y", 10.0))


def _as_list(estimators: Estimator | Sequence[Estimator]) -> list[Estimator]:
    return [estimators] if isinstance(estimators, Estimator) else list(estimators)


def _try_fit(estimator: Estimator, snapshot: MarketSnapshot, **context: object) -> tuple[YieldCurve | None, str | None]:
    try:
        return estimator(snapshot), None
    except CurveKitError as exc:
        logger.warning("fit failed", extra={"estimator": estimator.name, "error": str(exc), **context})
        return None, str(exc)


def _failed(estimator: str, case: str, index: int, error: str, detail: dict[str, object]) -> ReplicationResult:
    return ReplicationResult(estimator=estimator, case=case, index=index, status="failed", detail=detail, error=error)


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def _curve_distance(curve: YieldCurve, base: YieldCurve, grid: TenorGrid) -> dict[str, float]:
    return {"rmse_curve": rmse_curve(curve, base, grid), "mad": mad_curve(curve, base, grid)}


def _bump_label(bump: float) -> str:
    return f"bump={bump:g}"


def perturb_price_experiment(
    snapshot: MarketSnapshot,
    estimators: Estimator | Sequence[Estimator],
    bond_id: str,
    bumps: Sequence[float] = DEFAULT_BUMPS,
    grid: TenorGrid = DEFAULT_GRID,
) -> EvaluationReport:
    """Refit with one bond's price scaled by (1 + bump); compare against the unperturbed fit."""
    bond = snapshot.bond(bond_id)
    for bump in bumps:
        if not 1.0 + bump > 0:
            raise ValidationError(f"bump {bump} makes the price non-positive", bond_id=bond_id, field="bumps")

    report = EvaluationReport(
        "perturb",
        provenance={"bond_id": bond_id, "bumps": list(bumps), "grid": list(grid.tenors), "date": snapshot.date},
    )
    for estimator in _as_list(estimators):
        base, error = _try_fit(estimator, snapshot, bond_id=bond_id)
        for index, bump in enumerate(bumps):
            case = _bump_label(bump)
            detail = {"bond_id": bond_id, "bump": bump}
            if base is None:
                report.replications.append(_failed(estimator.name, case, index, f"unperturbed fit failed: {error}", detail))
                report.add(estimator.name, "rmse_curve", None, case=case)
                report.add(estimator.name, "mad", None, case=case)
                continue
            bumped = snapshot.with_bond_price(bond_id, bond.market_price * (1.0 + bump))
            curve, error_bumped = _try_fit(estimator, bumped, bond_id=bond_id, bump=bump)
            try:
                if curve is None:
                    raise ComputationError(error_bumped or "fit failed")
                values = _curve_distance(curve, base, grid)
            except CurveKitError as exc:
                report.replications.append(_failed(estimator.name, case, index, str(exc), detail))
                report.add(estimator.name, "rmse_curve", None, case=case)
                report.add(estimator.name, "mad", None, case=case)
                continue
            report.replications.append(
                ReplicationResult(estimator.name, case, index, "ok", detail=detail, values=values)
            )
            report.add(estimator.name, "rmse_curve", values["rmse_curve"], case=case)
            report.add(estimator.name, "mad", values["mad"], case=case)
    return report


def draw_drop_sets(
    bond_ids: Sequence[str],
    drop_counts: Sequence[int],
    n_mc: int,
    seed: int,
) -> dict[int, list[list[str]]]:
    rng = np.random.default_rng(seed)
    ordered = np.array(sorted(bond_ids))
    return {
        count: [sorted(str(x) for x in rng.choice(ordered, size=count, replace=False)) for _ in range(n_mc)]
        for count in drop_counts
    }


def drop_bonds_experiment(
    snapshot: MarketSnapshot,
    estimators: Estimator | Sequence[Estimator],
    drop_counts: Sequence[int] = DEFAULT_DROP_COUNTS,
    n_mc: int = 10,
    seed: int = 0,
    grid: TenorGrid = DEFAULT_GRID,
) -> EvaluationReport:
    if n_mc < 1:
        raise ValidationError("n_mc must be at least 1", field="n_mc")
    if any(count < 0 for count in drop_counts):
        raise ValidationError("drop counts must be non-negative", field="drop_counts")
    if drop_counts and max(drop_counts) >= len(snapshot):
        raise ValidationError(
            f"cannot drop {max(drop_counts)} of {len(snapshot)} bonds", field="drop_counts"
        )

    drop_sets = draw_drop_sets(snapshot.bond_ids, drop_counts, n_mc, seed)
    report = EvaluationReport(
        "drop",
        provenance={"drop_counts": list(drop_counts), "n_mc": n_mc, "seed": seed, "date": snapshot.date},
    )
    for estimator in _as_list(estimators):
        base, error = _try_fit(estimator, snapshot)
        for count, sets in drop_sets.items():
            case = f"drop={count}"
            rmses: list[float] = []
            mads: list[float] = []
            for index, dropped in enumerate(sets):
                detail = {"dropped": dropped}
                logger.debug("drop replication", extra={"estimator": estimator.name, "dropped": dropped})
                if base is None:
                    report.replications.append(_failed(estimator.name, case, index, f"full fit failed: {error}", detail))
                    continue
                curve, rep_error = _try_fit(estimator, snapshot.without(dropped), dropped=dropped)
                try:
                    if curve is None:
                        raise ComputationError(rep_error or "fit failed")
                    values = _curve_distance(curve, base, grid)
                except CurveKitError as exc:
                    report.replications.append(_failed(estimator.name, case, index, str(exc), detail))
                    continue
                rmses.append(values["rmse_curve"])
                mads.append(values["mad"])
                report.replications.append(ReplicationResult(estimator.name, case, index, "ok", detail=detail, values=values))
            report.add(estimator.name, "rmse_curve", _mean(rmses), case=case, seed=seed)
            report.add(estimator.name, "mad", _mean(mads), case=case, seed=seed)
            report.add(estimator.name, "failures", float(len(sets) - len(rmses)), case=case, seed=seed)
    return report


def stability_experiment(
    snapshots: Sequence[MarketSnapshot],
    estimators: Estimator | Sequence[Estimator],
    grid: TenorGrid = DEFAULT_GRID,
    buckets: Sequence[str] = BUCKETS,
    threshold: float = DEFAULT_HIT_THRESHOLD,
) -> EvaluationReport:
    """Day-over-day curve changes per bucket, their hit rate, and fixed-tenor yield series.

    A day whose fit fails is recorded and skipped; the next day is compared with the
    last day that fitted.
    """
    if len(snapshots) < 2:
        raise ValidationError("stability needs at least two snapshots", field="snapshots")
    if threshold < 0:
        raise ValidationError("threshold must be non-negative", field="threshold")

    report = EvaluationReport(
        "stability",
        provenance={
            "dates": [s.date for s in snapshots],
            "buckets": list(buckets),
            "threshold": threshold,
            "grid": list(grid.tenors),
        },
    )
    for estimator in _as_list(estimators):
        previous: tuple[str, YieldCurve] | None = None
        changes: dict[str, list[float]] = {bucket: [] for bucket in buckets}
        for index, snapshot in enumerate(snapshots):
            detail = {"date": snapshot.date, "previous": previous[0] if previous else None}
            curve, error = _try_fit(estimator, snapshot, date=snapshot.date)
            try:
                if curve is None:
                    raise ComputationError(error or "fit failed")
                points = [(label, tenor, curve.yield_at(tenor)) for label, tenor in SERIES_TENORS]
                values = rmse_curve_by_bucket(curve, previous[1], grid, buckets) if previous else {}
            except CurveKitError as exc:
                report.replications.append(_failed(estimator.name, snapshot.date, index, str(exc), detail))
                continue

            for label, tenor, value in points:
                bucket = bucket_of(tenor)
                report.add(estimator.name, f"yield_{label}", value, case=snapshot.date, bucket=bucket)
                report.add(estimator.name, f"benchmark_{label}", snapshot.benchmark.yield_at(tenor), case=snapshot.date, bucket=bucket)
            for bucket, value in values.items():
                changes[bucket].append(value)
                report.add(estimator.name, "rmse_curve", value, case=snapshot.date, bucket=bucket)
            report.replications.append(ReplicationResult(estimator.name, snapshot.date, index, "ok", detail=detail, values=values))
            previous = (snapshot.date, curve)

        for bucket in buckets:
            series = changes[bucket]
            report.add(estimator.name, "hit_rate", hit_rate(series, threshold) if series else None, bucket=bucket)
            report.add(estimator.name, "mean_rmse_curve", _mean(series), bucket=bucket)
    return report


def _loo_candidates(snapshot: MarketSnapshot, bucket_filter: str | None) -> list[str]:
    if bucket_filter is None:
        candidates = sorted(snapshot.bond_ids)
        if len(candidates) < 2:
            raise ValidationError("leave-one-out needs at least two bonds", field="bonds")
        return candidates
    if bucket_filter not in BUCKETS or bucket_filter == FULL:
        raise ValidationError(f"bucket filter must be one of {BUCKETS[1:]}", field="bucket_filter")
    candidates = sorted(bond.id for bond in snapshot.bonds if bucket_of(bond.maturity) == bucket_filter)
    if len(candidates) < 2:
        raise ValidationError(f"bucket {bucket_filter} holds {len(candidates)} bonds, need at least 2", field="bucket_filter")
    return candidates


def _root_mean_square(values: list[float]) -> float | None:
    return math.sqrt(sum(v * v for v in values) / len(values)) if values else None


def loo_experiment(
    snapshots: MarketSnapshot | Mapping[str, MarketSnapshot],
    estimators: Estimator | Sequence[Estimator],
    n_mc: int = 10,
    bucket_filter: str | None = None,
    seed: int = 0,
) -> EvaluationReport:
    """Hold out one random bond per replication and score the refit at its maturity.

    Several snapshots (e.g. one per market regime) may be passed as a mapping;
    each becomes one scenario case in the report.
    """
    if n_mc < 1:
        raise ValidationError("n_mc must be at least 1", field="n_mc")
    scenarios = {snapshots.date: snapshots} if isinstance(snapshots, MarketSnapshot) else dict(snapshots)
    if not scenarios:
        raise ValidationError("at least one snapshot is required", field="snapshots")

    rng = np.random.default_rng(seed)
    held_out: dict[str, list[str]] = {}
    for name, snapshot in scenarios.items():
        candidates = _loo_candidates(snapshot, bucket_filter)
        held_out[name] = [candidates[int(i)] for i in rng.integers(0, len(candidates), size=n_mc)]

    report = EvaluationReport(
        "loo",
        provenance={"scenarios": list(scenarios), "n_mc": n_mc, "bucket_filter": bucket_filter, "seed": seed},
    )
    for estimator in _as_list(estimators):
        for name, snapshot in scenarios.items():
            yield_errors: dict[str, list[float]] = {bucket: [] for bucket in BUCKETS}
            price_errors: dict[str, list[float]] = {bucket: [] for bucket in BUCKETS}
            for index, bond_id in enumerate(held_out[name]):
                bond = snapshot.bond(bond_id)
                bucket = bucket_of(bond.maturity)
                detail = {"bond_id": bond_id, "maturity": bond.maturity, "bucket": bucket}
                curve, error = _try_fit(estimator, snapshot.without([bond_id]), held_out=bond_id)
                if curve is None:
                    report.replications.append(_failed(estimator.name, name, index, error or "", detail))
                    continue
                try:
                    yield_error = curve.yield_at(bond.maturity) - yield_to_maturity(bond)
                    price_error = present_value(curve, bond) - bond.market_price
                except CurveKitError as exc:
                    report.replications.append(_failed(estimator.name, name, index, str(exc), detail))
                    continue
                for target in (FULL, bucket):
                    yield_errors[target].append(yield_error)
                    price_errors[target].append(price_error)
                report.replications.append(
                    ReplicationResult(
                        estimator.name,
                        name,
                        index,
                        "ok",
                        detail=detail,
                        values={"yield_error": yield_error, "price_error": price_error},
                    )
                )
            for bucket in BUCKETS:
                report.add(estimator.name, "rmse_ytm", _root_mean_square(yield_errors[bucket]), case=name, bucket=bucket, seed=seed)
                report.add(estimator.name, "rmse_price", _root_mean_square(price_errors[bucket]), case=name, bucket=bucket, seed=seed)
                report.add(estimator.name, "count", float(len(yield_errors[bucket])), case=name, bucket=bucket, seed=seed)
    return report


def loo_table(report: EvaluationReport, metric: str = "rmse_ytm") -> pd.DataFrame:
    """Scenario rows by bucket columns, one block per estimator."""
    frame = report.to_frame()
    frame = frame[frame["metric"] == metric]
    table = frame.pivot_table(index=["estimator", "case"], columns="bucket", values="value", aggfunc="first", dropna=False)
    return table.reindex(columns=list(BUCKETS))


def hyperparameter_scan(
    snapshot: MarketSnapshot,
    base: TrainConfig,
    learning_rates: Sequence[float] | None = None,
    epochs: Sequence[int] | None = None,
    gamma1s: Sequence[float] | None = None,
    gamma2s: Sequence[float] | None = None,
) -> EvaluationReport:
    """In-sample RMSE_ytm of the network over the product of the given settings.

    Unspecified axes stay at the base configuration's value.
    """
    axes = {
        "learning_rate": list(learning_rates or [base.learning_rate]),
        "epochs": list(epochs or [base.epochs]),
        "gamma1": list(gamma1s or [base.gamma1]),
        "gamma2": list(gamma2s or [base.gamma2]),
    }
    report = EvaluationReport(
        "hyperscan",
        provenance={"base": base.to_dict(), "axes": axes, "date": snapshot.date},
    )
    ytms = ytm_array(snapshot.bonds)
    for index, (rate, epoch_count, gamma1, gamma2) in enumerate(itertools.product(*axes.values())):
        config = replace(base, learning_rate=rate, epochs=epoch_count, gamma1=gamma1, gamma2=gamma2)
        case = f"lr={rate:g}|epochs={epoch_count}|gamma1={gamma1:g}|gamma2={gamma2:g}"
        detail = {"learning_rate": rate, "epochs": epoch_count, "gamma1": gamma1, "gamma2": gamma2}
        try:
            curve = NnCurve(params=train(snapshot, config), config=config)
            value = rmse_ytm(curve, snapshot, ytms)
        except CurveKitError as exc:
            logger.warning("hyperscan cell failed", extra={"case": case, "error": str(exc)})
            result = _failed("nn", case, index, str(exc), detail)
            report.add("nn", "rmse_ytm", None, case=case, seed=base.seed)
        else:
            result = ReplicationResult("nn", case, index, "ok", detail=detail, values={"rmse_ytm": value})
            report.add("nn", "rmse_ytm", value, case=case, seed=base.seed)
        report.replications.append(result)
    return report


def scan_table(report: EvaluationReport, rows: str = "learning_rate", columns: str = "epochs") -> pd.DataFrame:
    """Pivot hyperscan cells into a rows x columns RMSE_ytm table."""
    records = [{**rep.detail, "rmse_ytm": rep.values.get("rmse_ytm")} for rep in report.replications]
    frame = pd.DataFrame(records)
    return frame.pivot_table(index=rows, columns=columns, values="rmse_ytm", aggfunc="mean", dropna=False)
