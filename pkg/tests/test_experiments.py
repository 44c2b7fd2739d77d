import json
import math
from pathlib import Path

import numpy as np
import pytest

from curvekit.curves import SpreadCurve, YieldCurve
from curvekit.errors import FitError, ValidationError
from curvekit.estimators import Estimator, build_estimator, build_estimators
from curvekit.experiments import (
    draw_drop_sets,
    drop_bonds_experiment,
    hyperparameter_scan,
    loo_experiment,
    loo_table,
    perturb_price_experiment,
    scan_table,
    stability_experiment,
)
from curvekit.fit_config import FitConfig
from curvekit.market_data import MarketSnapshot
from curvekit.metrics import BUCKETS, FULL, LONG, bucket_of
from curvekit.neural import TrainConfig
from curvekit.nss import NssConfig
from curvekit.reports import EvaluationReport, write_report
from curvekit.scenarios import ScenarioSpec, generate_scenario, generate_sequence


SPREAD = 0.005


def _oracle() -> Estimator:
    """Returns the curve the synthetic prices were generated from."""
    return Estimator("oracle", lambda snapshot: SpreadCurve(snapshot.benchmark, SPREAD))


def _broken() -> Estimator:
    def fit(snapshot: MarketSnapshot) -> YieldCurve:
        raise FitError("always fails")

    return Estimator("broken", fit)


def test_perturb_rows_and_monotone_response(scenario_snapshot: MarketSnapshot) -> None:
    bond_id = scenario_snapshot.by_maturity()[-1].id
    estimators = [build_estimator("bootstrap"), build_estimator("kr")]

    report = perturb_price_experiment(scenario_snapshot, estimators, bond_id, (0.03, 0.05, 0.10))

    assert len(report.rows) == 12
    assert report.failure_count == 0
    assert report.estimators == ["bootstrap", "kr"]
    responses = [report.value("kr", "rmse_curve", case=f"bump={bump:g}") for bump in (0.03, 0.05, 0.1)]
    assert responses[0] < responses[1] < responses[2]
    for bump in ("bump=0.03", "bump=0.05", "bump=0.1"):
        metrics = report.metrics("bootstrap", case=bump)
        assert metrics["mad"] >= metrics["rmse_curve"] > 0


def test_perturb_rejects_bad_bump(scenario_snapshot: MarketSnapshot) -> None:
    with pytest.raises(ValidationError):
        perturb_price_experiment(scenario_snapshot, _oracle(), scenario_snapshot.bond_ids[0], (-1.0,))
    with pytest.raises(ValidationError):
        perturb_price_experiment(scenario_snapshot, _oracle(), "missing", (0.03,))


def test_drop_sets_are_seeded() -> None:
    ids = [f"B{i:02d}" for i in range(20)]

    first = draw_drop_sets(ids, (1, 5), n_mc=4, seed=3)

    assert first == draw_drop_sets(list(reversed(ids)), (1, 5), n_mc=4, seed=3)
    assert all(len(s) == 5 and len(set(s)) == 5 for s in first[5])
    assert first != draw_drop_sets(ids, (1, 5), n_mc=4, seed=4)


def test_drop_experiment_shares_draws_across_estimators(scenario_snapshot: MarketSnapshot) -> None:
    report = drop_bonds_experiment(
        scenario_snapshot, [build_estimator("bootstrap"), _oracle()], (1, 5), n_mc=3, seed=2
    )

    dropped = {
        (rep.estimator, rep.case, rep.index): rep.detail["dropped"] for rep in report.replications
    }
    for case in ("drop=1", "drop=5"):
        for index in range(3):
            assert dropped[("bootstrap", case, index)] == dropped[("oracle", case, index)]
    assert report.value("oracle", "rmse_curve", case="drop=5") == pytest.approx(0.0, abs=1e-15)
    assert report.value("bootstrap", "failures", case="drop=1") == 0.0


def test_drop_failures_are_counted_and_excluded(scenario_snapshot: MarketSnapshot) -> None:
    report = drop_bonds_experiment(scenario_snapshot, [_broken()], (1,), n_mc=4)

    assert report.failure_count == 4
    assert report.value("broken", "rmse_curve", case="drop=1") is None
    assert report.value("broken", "failures", case="drop=1") == 4.0
    with pytest.raises(ValidationError):
        drop_bonds_experiment(scenario_snapshot, [_broken()], (len(scenario_snapshot),))


def test_stability_on_identical_days_hits_every_time(zero_coupon_snapshot: MarketSnapshot) -> None:
    days = [zero_coupon_snapshot] * 3

    report = stability_experiment(days, build_estimator("bootstrap"))

    for bucket in BUCKETS:
        assert report.value("bootstrap", "hit_rate", bucket=bucket) == 1.0
        assert report.value("bootstrap", "mean_rmse_curve", bucket=bucket) == pytest.approx(0.0, abs=1e-15)
    assert report.value("bootstrap", "yield_2Y", case=zero_coupon_snapshot.date, bucket=bucket_of(2.0)) == pytest.approx(0.02)


def test_stability_compares_with_last_successful_day() -> None:
    days = generate_sequence(ScenarioSpec(n_bonds=20, seed=4), 4)
    skipped = days[1].date
    inner = build_estimator("bootstrap")

    def fit(snapshot: MarketSnapshot) -> YieldCurve:
        if snapshot.date == skipped:
            raise FitError("feed gap")
        return inner(snapshot)

    report = stability_experiment(days, Estimator("gappy", fit))

    assert report.failure_count == 1
    by_date = {rep.case: rep for rep in report.replications}
    assert not by_date[skipped].ok
    assert by_date[days[2].date].detail["previous"] == days[0].date
    changes = [row for row in report.rows if row.metric == "rmse_curve" and row.bucket == FULL]
    assert [row.case for row in changes] == [days[2].date, days[3].date]


def test_stability_series_follow_generating_curve() -> None:
    days = generate_sequence(ScenarioSpec(regime="falling", n_bonds=10, seed=1), 3)

    report = stability_experiment(days, _oracle())

    for day in days:
        model = report.value("oracle", "yield_10Y", case=day.date, bucket=bucket_of(10.0))
        benchmark = report.value("oracle", "benchmark_10Y", case=day.date, bucket=bucket_of(10.0))
        assert model == pytest.approx(benchmark + SPREAD)


def test_loo_with_oracle_estimator_is_exact() -> None:
    scenarios = {
        regime: generate_scenario(ScenarioSpec(regime=regime, n_bonds=25, seed=6, coupon_range=(0.0, 0.0)))
        for regime in ("flat", "rising", "falling")
    }

    report = loo_experiment(scenarios, _oracle(), n_mc=6, seed=1)

    assert report.cases("oracle") == ["flat", "rising", "falling"]
    for name in scenarios:
        assert report.value("oracle", "rmse_ytm", case=name) <= 1e-6
        assert report.value("oracle", "count", case=name) == 6.0
    table = loo_table(report)
    assert list(table.columns) == list(BUCKETS)
    assert len(table) == 3


def test_loo_buckets_replay_from_replications(scenario_snapshot: MarketSnapshot) -> None:
    report = loo_experiment(scenario_snapshot, build_estimator("kr"), n_mc=8, seed=3)
    case = scenario_snapshot.date

    for bucket in BUCKETS:
        errors = [
            rep.values["yield_error"]
            for rep in report.replications
            if rep.ok and (bucket == FULL or rep.detail["bucket"] == bucket)
        ]
        expected = math.sqrt(sum(e * e for e in errors) / len(errors)) if errors else None
        actual = report.value("kr", "rmse_ytm", case=case, bucket=bucket)
        if expected is None:
            assert actual is None
        else:
            assert actual == pytest.approx(expected, rel=1e-12)


def test_loo_bucket_filter_holds_out_long_bonds_only() -> None:
    snapshot = generate_scenario(ScenarioSpec(n_bonds=60, seed=8, coupon_range=(0.0, 0.0)))

    report = loo_experiment(snapshot, _oracle(), n_mc=5, bucket_filter=LONG, seed=0)

    assert all(rep.detail["maturity"] > 10.0 for rep in report.replications)
    with pytest.raises(ValidationError):
        loo_experiment(snapshot, _oracle(), bucket_filter="Full")


def test_hyperscan_covers_the_product() -> None:
    snapshot = generate_scenario(ScenarioSpec(n_bonds=8, seed=2))
    base = TrainConfig(epochs=3)

    report = hyperparameter_scan(snapshot, base, learning_rates=[1e-8, 1e-9], epochs=[2, 3])

    assert len(report.replications) == 4
    assert {rep.detail["gamma1"] for rep in report.replications} == {base.gamma1}
    table = scan_table(report)
    assert table.shape == (2, 2)
    assert np.all(np.isfinite(table.to_numpy()))

    gamma_table = scan_table(
        hyperparameter_scan(snapshot, base, gamma1s=[0.0, 1e3], gamma2s=[0.0, 1e4]), rows="gamma1", columns="gamma2"
    )
    assert gamma_table.shape == (2, 2)


ALL_ESTIMATORS = ["bootstrap", "nss", "kr", "nn"]


def _all_estimators() -> list[Estimator]:
    config = FitConfig(nss=NssConfig(n_starts=2, max_iter=400), nn=TrainConfig(epochs=5))
    return build_estimators(ALL_ESTIMATORS, config)


def _finite(values: list[float | None]) -> bool:
    return all(value is not None and math.isfinite(value) for value in values)


def test_perturb_runs_every_estimator(scenario_snapshot: MarketSnapshot) -> None:
    bond_id = scenario_snapshot.by_maturity()[-1].id

    report = perturb_price_experiment(scenario_snapshot, _all_estimators(), bond_id, (0.03, 0.05, 0.10))

    assert report.failure_count == 0
    assert report.estimators == ALL_ESTIMATORS
    assert len(report.rows) == 4 * 3 * 2
    assert _finite([row.value for row in report.rows])
    for name in ALL_ESTIMATORS:
        for case in report.cases(name):
            metrics = report.metrics(name, case=case)
            assert metrics["mad"] >= metrics["rmse_curve"]


def test_drop_runs_every_estimator(scenario_snapshot: MarketSnapshot) -> None:
    report = drop_bonds_experiment(scenario_snapshot, _all_estimators(), (1, 5, 10), n_mc=3, seed=1)

    assert report.failure_count == 0
    assert len(report.replications) == 4 * 3 * 3
    for name in ALL_ESTIMATORS:
        assert report.cases(name) == ["drop=1", "drop=5", "drop=10"]
        assert _finite([report.value(name, "rmse_curve", case=case) for case in report.cases(name)])


def test_stability_runs_every_estimator() -> None:
    days = generate_sequence(ScenarioSpec(regime="rising", n_bonds=30, seed=5), 5)

    report = stability_experiment(days, _all_estimators())

    assert report.failure_count == 0
    for name in ALL_ESTIMATORS:
        rates = [report.value(name, "hit_rate", bucket=bucket) for bucket in BUCKETS]
        assert _finite(rates)
        assert all(0.0 <= rate <= 1.0 for rate in rates if rate is not None)
        assert len([r for r in report.rows if r.estimator == name and r.metric == "rmse_curve" and r.bucket == FULL]) == 4


def test_loo_runs_every_estimator_in_bucket_layout() -> None:
    scenarios = {
        regime: generate_scenario(ScenarioSpec(regime=regime, n_bonds=30, seed=3))
        for regime in ("flat", "rising", "falling")
    }

    report = loo_experiment(scenarios, _all_estimators(), n_mc=4, seed=2)

    assert report.failure_count == 0
    table = loo_table(report)
    assert list(table.columns) == list(BUCKETS)
    assert len(table) == 4 * 3
    assert np.all(np.isfinite(table[FULL].to_numpy(dtype=float)))


def test_rerun_writes_identical_reports(scenario_snapshot: MarketSnapshot, tmp_path: Path) -> None:
    def run() -> EvaluationReport:
        return drop_bonds_experiment(scenario_snapshot, _all_estimators(), (1, 5), n_mc=2, seed=9)

    first_json, first_csv = write_report(run(), tmp_path / "first", "drop")
    second_json, second_csv = write_report(run(), tmp_path / "second", "drop")

    assert first_csv.read_bytes() == second_csv.read_bytes()
    first = json.loads(first_json.read_text(encoding="utf-8"))
    second = json.loads(second_json.read_text(encoding="utf-8"))
    first.pop("metadata")
    second.pop("metadata")
    assert first == second

    restored = EvaluationReport.from_dict(first)
    assert restored.to_dict(timestamp="t") == {**first, "metadata": {"generated_at": "t"}}
