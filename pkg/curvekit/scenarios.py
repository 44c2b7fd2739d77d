"""Synthetic bond markets in flat, rising and falling regimes."""

from dataclasses import dataclass
import logging
from typing import Literal

import numpy as np
import pandas as pd

from curvekit.curves import SpreadCurve, YieldCurve
from curvekit.errors import ValidationError
from curvekit.market_data import BenchmarkCurve, Bond, Cashflow, MarketSnapshot
from curvekit.pricing import present_value


logger = logging.getLogger(__name__)

Regime = Literal["flat", "rising", "falling"]
REGIMES: tuple[str, ...] = ("flat", "rising", "falling")
BENCHMARK_TENORS: tuple[float, ...] = (1 / 365, 1 / 12, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0)
SYNTHETIC_FACE_VALUE = 100.0
MAX_ADVISED_NOISE = 0.05
DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class ScenarioSpec:
    regime: Regime = "flat"
    n_bonds: int = 60
    maturity_range: tuple[float, float] = (0.05, 15.0)
    coupon_range: tuple[float, float] = (0.0, 0.05)
    spread_over_benchmark: float = 0.005
    price_noise_sd: float = 0.0
    seed: int = 0
    level: float = 0.03
    date: str = "2024-06-03"

    def __post_init__(self) -> None:
        object.__setattr__(self, "maturity_range", tuple(float(x) for x in self.maturity_range))
        object.__setattr__(self, "coupon_range", tuple(float(x) for x in self.coupon_range))
        if self.regime not in REGIMES:
            raise ValidationError(f"regime must be one of {REGIMES}", field="regime")
        if self.n_bonds < 2:
            raise ValidationError("n_bonds must be at least 2", field="n_bonds")
        low, high = self.maturity_range
        if not 0 < low < high:
            raise ValidationError("maturity_range needs 0 < min < max", field="maturity_range")
        coupon_low, coupon_high = self.coupon_range
        if coupon_low < 0 or coupon_high < coupon_low:
            raise ValidationError("coupon_range needs 0 <= min <= max", field="coupon_range")
        if self.price_noise_sd < 0:
            raise ValidationError("price_noise_sd must be non-negative", field="price_noise_sd")
        if self.price_noise_sd >= MAX_ADVISED_NOISE:
            logger.warning("price noise above advised bound", extra={"price_noise_sd": self.price_noise_sd})


def regime_rate(regime: str, level: float, t: np.ndarray) -> np.ndarray:
    shape = 0.5 * np.exp(-np.asarray(t, dtype=float) / 4.0)
    if regime == "rising":
        return level * (1.0 - shape)
    if regime == "falling":
        return level * (1.0 + shape)
    return np.full(np.shape(t), float(level))


def benchmark_for(regime: str, level: float) -> BenchmarkCurve:
    rates = regime_rate(regime, level, np.array(BENCHMARK_TENORS))
    return BenchmarkCurve(tenors=BENCHMARK_TENORS, rates=tuple(float(r) for r in rates))


def generating_curve(snapshot: MarketSnapshot, spec: ScenarioSpec) -> YieldCurve:
    return SpreadCurve(snapshot.benchmark, spec.spread_over_benchmark)


@dataclass(frozen=True)
class _BondTerms:
    bond_id: str
    maturity: float
    coupon_rate: float


def _draw_universe(spec: ScenarioSpec, rng: np.random.Generator) -> list[_BondTerms]:
    low, high = spec.maturity_range
    # Squaring the uniform draw crowds maturities towards the short end.
    maturities = np.sort(low + (high - low) * rng.uniform(size=spec.n_bonds) ** 2)
    coupons = np.round(rng.uniform(*spec.coupon_range, size=spec.n_bonds), 4)
    return [
        _BondTerms(bond_id=f"B{index + 1:03d}", maturity=float(maturity), coupon_rate=float(coupon))
        for index, (maturity, coupon) in enumerate(zip(maturities, coupons))
    ]


def _coupon_schedule(maturity: float, coupon_rate: float) -> tuple[Cashflow, ...]:
    if coupon_rate <= 0:
        return ()
    amount = coupon_rate * SYNTHETIC_FACE_VALUE
    times: list[float] = []
    offset = 0
    while maturity - offset > 0:
        times.append(maturity - offset)
        offset += 1
    return tuple(Cashflow(time=t, amount=amount) for t in reversed(times))


def _price_bonds(
    terms: list[_BondTerms],
    curve: YieldCurve,
    noise_sd: float,
    rng: np.random.Generator,
    elapsed: float = 0.0,
) -> list[Bond]:
    bonds: list[Bond] = []
    for term in terms:
        maturity = term.maturity - elapsed
        if maturity <= 1.0 / DAYS_PER_YEAR:
            continue
        # Schedules are anchored on the original maturity so coupon dates age with the bond.
        cashflows = tuple(
            Cashflow(time=cf.time - elapsed, amount=cf.amount)
            for cf in _coupon_schedule(term.maturity, term.coupon_rate)
            if cf.time - elapsed > 0
        )
        exact = Bond(
            id=term.bond_id,
            cashflows=cashflows,
            face_value=SYNTHETIC_FACE_VALUE,
            maturity=maturity,
            market_price=SYNTHETIC_FACE_VALUE,
        )
        price = present_value(curve, exact)
        bonds.append(exact.with_price(price * (1.0 + rng.normal(0.0, noise_sd))))
    return bonds


def generate_scenario(spec: ScenarioSpec) -> MarketSnapshot:
    rng = np.random.default_rng(spec.seed)
    benchmark = benchmark_for(spec.regime, spec.level)
    terms = _draw_universe(spec, rng)
    curve = SpreadCurve(benchmark, spec.spread_over_benchmark)
    bonds = _price_bonds(terms, curve, spec.price_noise_sd, rng)
    logger.info(
        "scenario generated",
        extra={"regime": spec.regime, "bonds": len(bonds), "seed": spec.seed},
    )
    return MarketSnapshot(date=spec.date, bonds=tuple(bonds), benchmark=benchmark)


def generate_sequence(
    spec: ScenarioSpec,
    days: int,
    *,
    level_drift_sd: float = 0.0005,
) -> list[MarketSnapshot]:
    """Business-day sequence over one bond universe with a drifting benchmark level."""
    if days < 1:
        raise ValidationError("days must be at least 1", field="days")
    if level_drift_sd < 0:
        raise ValidationError("level_drift_sd must be non-negative", field="level_drift_sd")

    rng = np.random.default_rng(spec.seed)
    terms = _draw_universe(spec, rng)
    dates = pd.bdate_range(start=spec.date, periods=days)
    shocks = rng.normal(0.0, level_drift_sd, size=days)
    shocks[0] = 0.0
    levels = spec.level + np.cumsum(shocks)

    snapshots: list[MarketSnapshot] = []
    for day, level in zip(dates, levels):
        elapsed = (day - dates[0]).days / DAYS_PER_YEAR
        benchmark = benchmark_for(spec.regime, float(level))
        curve = SpreadCurve(benchmark, spec.spread_over_benchmark)
        bonds = _price_bonds(terms, curve, spec.price_noise_sd, rng, elapsed=elapsed)
        if not bonds:
            raise ValidationError(f"every bond matured by {day.date().isoformat()}", field="days")
        snapshots.append(MarketSnapshot(date=day.date().isoformat(), bonds=tuple(bonds), benchmark=benchmark))
    return snapshots
