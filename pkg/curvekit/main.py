import argparse
from collections.abc import Callable, Sequence
from datetime import date
import hashlib
import json
import logging
from pathlib import Path
import sys

from curvekit.config import Settings, get_settings
from curvekit.database import build_session_factory
from curvekit.errors import ComputationError, ValidationError
from curvekit.estimators import build_estimator, build_estimators, parse_names
from curvekit.experiments import (
    drop_bonds_experiment,
    hyperparameter_scan,
    loo_experiment,
    loo_table,
    perturb_price_experiment,
    scan_table,
    stability_experiment,
)
from curvekit.fit_config import ESTIMATORS, FitConfig, apply_overrides, load_fit_config
from curvekit.market_data import MarketSnapshot
from curvekit.metrics import BUCKETS, DEFAULT_HIT_THRESHOLD, rmse_ytm
from curvekit.reports import EvaluationReport, write_curve_samples, write_model
from curvekit.retry import RetryExhaustedError
from curvekit.runner import ExperimentRunner, run_daily
from curvekit.scenarios import REGIMES, ScenarioSpec, generate_scenario, generate_sequence
from curvekit.scheduler import start_scheduler
from curvekit.snapshot_io import load_snapshot, save_snapshot


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_COMPUTATION = 4


def _float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{raw}'") from exc


def _int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{raw}'") from exc


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--regime", choices=REGIMES, default="flat")
    parser.add_argument("--bonds", type=int, default=60, help="number of bonds (at least 2)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise", type=float, default=0.0, help="relative price noise standard deviation")
    parser.add_argument("--spread", type=float, default=0.005, help="spread over the benchmark in decimal")
    parser.add_argument("--level", type=float, default=0.03, help="benchmark level in decimal")
    parser.add_argument("--maturity-range", type=_float_list, default=[0.05, 15.0], help="min,max maturity in years")
    parser.add_argument("--coupon-range", type=_float_list, default=[0.0, 0.05], help="min,max coupon rate")
    parser.add_argument("--date", default="2024-06-03", help="snapshot date (first date of a sequence)")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON fit config; flags override its values")
    group = parser.add_argument_group("estimator settings")
    group.add_argument("--nss-starts", type=int, help="NSS multi-start count")
    group.add_argument("--nss-max-iter", type=int, help="NSS iterations per start")
    group.add_argument("--kr-lambda", type=float, help="KR smoothness weight")
    group.add_argument("--kr-a", type=float, help="KR first-derivative weight")
    group.add_argument("--kr-b", type=float, help="KR second-derivative weight")
    group.add_argument("--nn-lr", type=float, help="NN learning rate")
    group.add_argument("--nn-epochs", type=int, help="NN epochs")
    group.add_argument("--nn-gamma1", type=float, help="NN smoothness weight")
    group.add_argument("--nn-gamma2", type=float, help="NN benchmark-trend weight")
    group.add_argument("--nn-hidden", type=int, help="NN hidden units")
    group.add_argument("--nn-init-scale", type=float, help="NN initialization scale")
    group.add_argument("--nn-regularizer-mode", choices=["per_bond", "per_epoch"], help="NN regularizer schedule")
    group.add_argument("--nn-seed", type=int, help="NN initialization seed")


def _add_experiment_flags(parser: argparse.ArgumentParser, *, estimators: bool = True) -> None:
    if estimators:
        parser.add_argument("--estimators", default="nss,kr,nn", help=f"comma-separated subset of {ESTIMATORS}")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--run-key", help="idempotency key; derived from the inputs when omitted")
    parser.add_argument("--output-dir", help="report directory (default OUTPUT_DIR/reports)")
    parser.add_argument("--format", choices=["json", "csv"], help="snapshot format (default from suffix)")
    _add_fit_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvekit", description="Estimate and evaluate bond yield curves")
    subparsers = parser.add_subparsers(dest="command", required=True)

    generate_parser = subparsers.add_parser("generate", help="write a synthetic market snapshot")
    _add_scenario_flags(generate_parser)
    generate_parser.add_argument("--days", type=int, default=1, help="business days; more than one writes a sequence")
    generate_parser.add_argument("--drift", type=float, default=0.0005, help="daily benchmark level drift sd")
    generate_parser.add_argument("--format", choices=["json", "csv"], help="default from the output suffix")
    generate_parser.add_argument("-o", "--output", required=True, help="snapshot file, or directory when --days > 1")

    fit_parser = subparsers.add_parser("fit", help="fit one estimator to a snapshot")
    fit_parser.add_argument("snapshot", help="snapshot file")
    fit_parser.add_argument("--estimator", choices=ESTIMATORS)
    fit_parser.add_argument("--format", choices=["json", "csv"], help="snapshot format (default from suffix)")
    fit_parser.add_argument("--model-out", help="model JSON path")
    fit_parser.add_argument("--curve-out", help="curve sample CSV path")
    _add_fit_flags(fit_parser)

    experiment_parser = subparsers.add_parser("experiment", help="run an evaluation protocol")
    experiments = experiment_parser.add_subparsers(dest="experiment", required=True)

    perturb = experiments.add_parser("perturb", help="single-bond price bumps")
    perturb.add_argument("snapshot")
    perturb.add_argument("--bond", help="bond id (default: longest maturity)")
    perturb.add_argument("--bumps", type=_float_list, default=[0.03, 0.05, 0.10])
    _add_experiment_flags(perturb)

    drop = experiments.add_parser("drop", help="random bond removal")
    drop.add_argument("snapshot")
    drop.add_argument("--counts", type=_int_list, default=[1, 5, 10])
    drop.add_argument("--mc", type=int, default=10, help="Monte Carlo replications per count")
    _add_experiment_flags(drop)

    stability = experiments.add_parser("stability", help="day-over-day curve changes")
    stability.add_argument("snapshots", nargs="*", help="date-ordered snapshot files; omit to generate a sequence")
    stability.add_argument("--days", type=int, default=30, help="synthetic days when no files are given")
    stability.add_argument("--regime", choices=REGIMES, default="flat")
    stability.add_argument("--bonds", type=int, default=60)
    stability.add_argument("--noise", type=float, default=0.0)
    stability.add_argument("--drift", type=float, default=0.0005)
    stability.add_argument("--start", default="2024-06-03")
    stability.add_argument("--threshold", type=float, default=DEFAULT_HIT_THRESHOLD)
    _add_experiment_flags(stability)

    loo = experiments.add_parser("loo", help="leave-one-out accuracy by bucket")
    loo.add_argument("snapshots", nargs="+", help="one snapshot per scenario, labelled by file name")
    loo.add_argument("--mc", type=int, default=10)
    loo.add_argument("--bucket", choices=BUCKETS[1:], help="draw the held-out bond from this bucket only")
    _add_experiment_flags(loo)

    hyperscan = experiments.add_parser("hyperscan", help="NN hyperparameter sweep")
    hyperscan.add_argument("snapshot")
    hyperscan.add_argument("--lr", type=_float_list, help="learning rates")
    hyperscan.add_argument("--epochs", type=_int_list, help="epoch counts")
    hyperscan.add_argument("--gamma1", type=_float_list, help="smoothness weights")
    hyperscan.add_argument("--gamma2", type=_float_list, help="trend weights")
    _add_experiment_flags(hyperscan, estimators=False)

    schedule_parser = subparsers.add_parser("schedule", help="start the daily curve scheduler")
    schedule_parser.add_argument("--run-now", action="store_true", help="also run once immediately")

    daily_parser = subparsers.add_parser("daily", help="fit the daily estimators for one date")
    daily_parser.add_argument("--run-date", required=True, help="date in YYYY-MM-DD format")

    return parser


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def resolve_fit_config(args: argparse.Namespace, settings: Settings) -> FitConfig:
    """Module defaults, then the config file, then flags."""
    base = load_fit_config(args.config or settings.fit_config_path)
    return apply_overrides(
        base,
        estimator=getattr(args, "estimator", None),
        nss={"n_starts": args.nss_starts, "max_iter": args.nss_max_iter},
        kr={"lambda": args.kr_lambda, "a": args.kr_a, "b": args.kr_b},
        nn={
            "learning_rate": args.nn_lr,
            "epochs": args.nn_epochs,
            "gamma1": args.nn_gamma1,
            "gamma2": args.nn_gamma2,
            "hidden_count": args.nn_hidden,
            "init_scale": args.nn_init_scale,
            "regularizer_mode": args.nn_regularizer_mode,
            "seed": args.nn_seed,
        },
    )


def _scenario_spec(args: argparse.Namespace) -> ScenarioSpec:
    return ScenarioSpec(
        regime=args.regime,
        n_bonds=args.bonds,
        maturity_range=tuple(args.maturity_range),
        coupon_range=tuple(args.coupon_range),
        spread_over_benchmark=args.spread,
        price_noise_sd=args.noise,
        seed=args.seed,
        level=args.level,
        date=args.date,
    )


def cmd_generate(args: argparse.Namespace) -> int:
    if len(args.maturity_range) != 2 or len(args.coupon_range) != 2:
        raise ValidationError("ranges take exactly two values", field="range")
    spec = _scenario_spec(args)
    output = Path(args.output)
    if args.days > 1:
        suffix = args.format or "json"
        snapshots = generate_sequence(spec, args.days, level_drift_sd=args.drift)
        for snapshot in snapshots:
            save_snapshot(snapshot, output / f"snapshot-{snapshot.date}.{suffix}", suffix)
    else:
        snapshots = [generate_scenario(spec)]
        save_snapshot(snapshots[0], output, args.format)

    first = snapshots[0]
    print(
        "bonds={bonds} days={days} date={date} regime={regime} benchmark_min={low:.6f} benchmark_max={high:.6f} output={output}".format(
            bonds=len(first),
            days=len(snapshots),
            date=first.date,
            regime=spec.regime,
            low=min(first.benchmark.rates),
            high=max(first.benchmark.rates),
            output=output,
        )
    )
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_fit_config(args, settings)
    snapshot = load_snapshot(args.snapshot, args.format)
    estimator = build_estimator(config.estimator, config)
    curve = estimator(snapshot)

    stem = f"{snapshot.date}-{estimator.name}"
    fit_dir = Path(settings.output_dir) / "fits"
    model_path = Path(args.model_out) if args.model_out else fit_dir / f"{stem}.json"
    curve_path = Path(args.curve_out) if args.curve_out else fit_dir / f"{stem}.csv"
    write_model(model_path, estimator=estimator.name, date=snapshot.date, curve=curve, config=config.to_dict())
    write_curve_samples(curve, snapshot.benchmark, curve_path, config.grid)

    print(
        "estimator={estimator} date={date} bonds={bonds} rmse_ytm={rmse:.10f} model={model} curve={curve}".format(
            estimator=estimator.name,
            date=snapshot.date,
            bonds=len(snapshot),
            rmse=rmse_ytm(curve, snapshot),
            model=model_path,
            curve=curve_path,
        )
    )
    return EXIT_OK


def _default_run_key(experiment: str, config: dict[str, object]) -> str:
    digest = hashlib.sha1(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:12]
    return f"{experiment}-{digest}"


def _stability_snapshots(args: argparse.Namespace) -> list[MarketSnapshot]:
    if args.snapshots:
        return [load_snapshot(path, args.format) for path in args.snapshots]
    spec = ScenarioSpec(
        regime=args.regime,
        n_bonds=args.bonds,
        price_noise_sd=args.noise,
        seed=args.seed,
        date=args.start,
    )
    return generate_sequence(spec, args.days, level_drift_sd=args.drift)


def _experiment_plan(
    args: argparse.Namespace, config: FitConfig
) -> tuple[Callable[[], EvaluationReport], dict[str, object]]:
    """Load inputs up front so bad files fail before a run is recorded."""
    echo: dict[str, object] = {"experiment": args.experiment, "seed": args.seed, "fit": config.to_dict()}
    if args.experiment == "hyperscan":
        snapshot = load_snapshot(args.snapshot, args.format)
        echo.update(snapshot=args.snapshot, lr=args.lr, epochs=args.epochs, gamma1=args.gamma1, gamma2=args.gamma2)
        base = config.nn
        return (
            lambda: hyperparameter_scan(snapshot, base, args.lr, args.epochs, args.gamma1, args.gamma2),
            echo,
        )

    estimators = build_estimators(parse_names(args.estimators), config)
    echo["estimators"] = [e.name for e in estimators]
    if args.experiment == "perturb":
        snapshot = load_snapshot(args.snapshot, args.format)
        bond_id = args.bond or snapshot.by_maturity()[-1].id
        echo.update(snapshot=args.snapshot, bond=bond_id, bumps=args.bumps)
        return lambda: perturb_price_experiment(snapshot, estimators, bond_id, args.bumps, config.grid), echo
    if args.experiment == "drop":
        snapshot = load_snapshot(args.snapshot, args.format)
        echo.update(snapshot=args.snapshot, counts=args.counts, mc=args.mc)
        return lambda: drop_bonds_experiment(snapshot, estimators, args.counts, args.mc, args.seed, config.grid), echo
    if args.experiment == "stability":
        snapshots = _stability_snapshots(args)
        echo.update(
            snapshots=args.snapshots,
            days=args.days,
            regime=args.regime,
            bonds=args.bonds,
            noise=args.noise,
            drift=args.drift,
            start=args.start,
            threshold=args.threshold,
        )
        return lambda: stability_experiment(snapshots, estimators, config.grid, BUCKETS, args.threshold), echo
    stems = [Path(path).stem for path in args.snapshots]
    duplicates = sorted({stem for stem in stems if stems.count(stem) > 1})
    if duplicates:
        raise ValidationError(f"scenario names must be unique, got {duplicates} more than once", field="snapshots")
    scenarios = {stem: load_snapshot(path, args.format) for stem, path in zip(stems, args.snapshots)}
    echo.update(snapshots=args.snapshots, mc=args.mc, bucket=args.bucket)
    return lambda: loo_experiment(scenarios, estimators, args.mc, args.bucket, args.seed), echo


def cmd_experiment(args: argparse.Namespace, settings: Settings) -> int:
    config = resolve_fit_config(args, settings)
    execute, echo = _experiment_plan(args, config)
    run_key = args.run_key or _default_run_key(args.experiment, echo)

    runner = ExperimentRunner(settings, build_session_factory(settings.database_url))
    result, report = runner.run(
        experiment=args.experiment,
        run_key=run_key,
        execute=execute,
        config=echo,
        report_dir=args.output_dir,
    )
    if report is not None and args.experiment == "hyperscan":
        table_path = Path(result.report_path or "").with_suffix(".table.csv")
        scan_table(report).to_csv(table_path, lineterminator="\n")
    if report is not None and args.experiment == "loo":
        table_path = Path(result.report_path or "").with_suffix(".table.csv")
        loo_table(report).to_csv(table_path, lineterminator="\n")

    print(
        "run_id={run_id} run_key={run_key} experiment={experiment} status={status} failures={failures} report={report}".format(
            run_id=result.run_id,
            run_key=result.run_key,
            experiment=result.experiment,
            status=result.status,
            failures=result.failure_count,
            report=result.report_path,
        )
    )
    return EXIT_COMPUTATION if result.failure_count else EXIT_OK


def cmd_daily(args: argparse.Namespace, settings: Settings) -> int:
    run_date = date.fromisoformat(args.run_date)
    result = run_daily(
        settings,
        build_session_factory(settings.database_url),
        run_date,
        fit_config=load_fit_config(settings.fit_config_path),
        trigger_source="manual",
    )
    print(
        "run_id={run_id} run_key={run_key} status={status} failures={failures} report={report}".format(
            run_id=result.run_id,
            run_key=result.run_key,
            status=result.status,
            failures=result.failure_count,
            report=result.report_path,
        )
    )
    return EXIT_COMPUTATION if result.failure_count else EXIT_OK


def dispatch(args: argparse.Namespace, settings: Settings) -> int:
    if args.command == "generate":
        return cmd_generate(args)
    if args.command == "fit":
        return cmd_fit(args, settings)
    if args.command == "experiment":
        return cmd_experiment(args, settings)
    if args.command == "daily":
        return cmd_daily(args, settings)
    start_scheduler(settings, build_session_factory(settings.database_url), run_now=args.run_now)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> None:
    args = parse_args(argv)
    settings = get_settings()

    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )

    try:
        code = dispatch(args, settings)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except RetryExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_COMPUTATION
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_COMPUTATION
    if code:
        raise SystemExit(code)


if __name__ == "__main__":
    main()
