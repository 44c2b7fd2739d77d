from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest
from sqlalchemy.orm import Session, sessionmaker

from curvekit.config import Settings
from curvekit.database import build_session_factory
from curvekit.market_data import BenchmarkCurve, Bond, MarketSnapshot
from curvekit.runner import ExperimentRunner
from curvekit.scenarios import ScenarioSpec, generate_scenario


@pytest.fixture()
def temp_workspace(tmp_path: Path) -> Path:
    (tmp_path / "data" / "input").mkdir(parents=True, exist_ok=True)
    (tmp_path / "outputs").mkdir(parents=True, exist_ok=True)
    return tmp_path


@pytest.fixture()
def test_settings(temp_workspace: Path) -> Settings:
    return Settings(
        app_name="curvekit",
        database_url=f"sqlite:///{temp_workspace / 'test.db'}",
        log_level="INFO",
        input_dir=str(temp_workspace / "data" / "input"),
        output_dir=str(temp_workspace / "outputs"),
        max_load_retries=1,
        retry_backoff_seconds=0,
        schedule_hour_utc=18,
        schedule_minute_utc=30,
        daily_estimators=("bootstrap", "kr"),
        fit_config_path=None,
    )


@pytest.fixture()
def session_factory(test_settings: Settings) -> sessionmaker[Session]:
    return build_session_factory(test_settings.database_url)


@pytest.fixture()
def runner(test_settings: Settings, session_factory: sessionmaker[Session]) -> Generator[ExperimentRunner, None, None]:
    yield ExperimentRunner(test_settings, session_factory)


@pytest.fixture()
def flat_benchmark() -> BenchmarkCurve:
    return BenchmarkCurve(tenors=(0.25, 1.0, 5.0, 30.0), rates=(0.02, 0.02, 0.02, 0.02))


@pytest.fixture()
def zero_coupon_snapshot(flat_benchmark: BenchmarkCurve) -> MarketSnapshot:
    """Eight zero-coupon bonds priced off a flat 2% curve."""
    maturities = (0.25, 0.5, 1.0, 2.0, 3.5, 5.0, 7.0, 10.0)
    bonds = tuple(
        Bond(
            id=f"Z{index:02d}",
            cashflows=(),
            face_value=100.0,
            maturity=maturity,
            market_price=100.0 * float(np.exp(-0.02 * maturity)),
        )
        for index, maturity in enumerate(maturities)
    )
    return MarketSnapshot(date="2024-06-03", bonds=bonds, benchmark=flat_benchmark)


@pytest.fixture()
def scenario_spec() -> ScenarioSpec:
    return ScenarioSpec(regime="rising", n_bonds=30, seed=11)


@pytest.fixture()
def scenario_snapshot(scenario_spec: ScenarioSpec) -> MarketSnapshot:
    return generate_scenario(scenario_spec)
