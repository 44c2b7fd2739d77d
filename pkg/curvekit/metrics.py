"""Curve accuracy and stability metrics on a fixed tenor grid."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from curvekit.curves import YieldCurve
from curvekit.errors import ValidationError
from curvekit.market_data import MarketSnapshot
from curvekit.pricing import ytm_array


DAY = 1.0 / 365.0
MONTH = 1.0 / 12.0
DEFAULT_LABELS: tuple[str, ...] = (
    "1D", "1W", "2W", "1M", "2M", "3M", "6M", "9M", "12M", "15M", "18M", "21M",
    "2Y", "3Y", "4Y", "5Y", "6Y", "7Y", "8Y", "9Y", "10Y", "12Y", "15Y", "20Y", "25Y", "30Y",
)
DEFAULT_TENORS: tuple[float, ...] = (
    DAY, 7 * DAY, 14 * DAY,
    MONTH, 2 * MONTH, 3 * MONTH, 6 * MONTH, 9 * MONTH, 12 * MONTH, 15 * MONTH, 18 * MONTH, 21 * MONTH,
    2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 12.0, 15.0, 20.0, 25.0, 30.0,
)

FULL = "Full"
SHORT = "<2Y"
MEDIUM = "2Y-10Y"
LONG = ">10Y"
BUCKETS: tuple[str, ...] = (FULL, SHORT, MEDIUM, LONG)
DEFAULT_HIT_THRESHOLD = 0.0010


@dataclass(frozen=True)
class TenorGrid:
    tenors: tuple[float, ...] = DEFAULT_TENORS

    def __post_init__(self) -> None:
        object.__setattr__(self, "tenors", tuple(float(t) for t in self.tenors))
        if len(self.tenors) < 2:
            raise ValidationError("grid needs at least two tenors", field="grid")
        if self.tenors[0] <= 0:
            raise ValidationError("grid tenors must be positive", field="grid")
        if any(b <= a for a, b in zip(self.tenors, self.tenors[1:])):
            raise ValidationError("grid must be strictly increasing", field="grid")

    def __len__(self) -> int:
        return len(self.tenors)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.tenors)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.tenors == DEFAULT_TENORS:
            return DEFAULT_LABELS
        return tuple(f"{t:g}Y" for t in self.tenors)

    def bucket(self, name: str) -> np.ndarray:
        times = self.array
        return times[bucket_mask(times, name)]


DEFAULT_GRID = TenorGrid()


def bucket_of(t: float) -> str:
    if t < 2.0:
        return SHORT
    if t > 10.0:
        return LONG
    return MEDIUM


def bucket_mask(times: np.ndarray, name: str) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if name == FULL:
        return np.ones(times.shape, dtype=bool)
    if name == SHORT:
        return times < 2.0
    if name == MEDIUM:
        return (times >= 2.0) & (times <= 10.0)
    if name == LONG:
        return times > 10.0
    raise ValidationError(f"unknown bucket '{name}', expected one of {BUCKETS}", field="bucket")


def rmse_ytm(curve: YieldCurve, snapshot: MarketSnapshot, ytms: np.ndarray | None = None) -> float:
    ytms = ytm_array(snapshot.bonds) if ytms is None else np.asarray(ytms, dtype=float)
    maturities = np.array([bond.maturity for bond in snapshot.bonds])
    errors = curve.yields(maturities) - ytms
    return float(np.sqrt(np.mean(errors**2)))


def _grid_differences(curve_a: YieldCurve, curve_b: YieldCurve, times: np.ndarray) -> np.ndarray:
    return curve_a.yields(times) - curve_b.yields(times)


def rmse_curve(curve_a: YieldCurve, curve_b: YieldCurve, grid: TenorGrid = DEFAULT_GRID) -> float:
    differences = _grid_differences(curve_a, curve_b, grid.array)
    return float(np.sqrt(np.mean(differences**2)))


def mad_curve(curve_a: YieldCurve, curve_b: YieldCurve, grid: TenorGrid = DEFAULT_GRID) -> float:
    """Maximum absolute yield difference, taken over the grid points."""
    differences = _grid_differences(curve_a, curve_b, grid.array)
    return float(np.max(np.abs(differences)))


def rmse_curve_by_bucket(
    curve_a: YieldCurve,
    curve_b: YieldCurve,
    grid: TenorGrid = DEFAULT_GRID,
    buckets: Sequence[str] = BUCKETS,
) -> dict[str, float]:
    times = grid.array
    differences = _grid_differences(curve_a, curve_b, times)
    result: dict[str, float] = {}
    for name in buckets:
        mask = bucket_mask(times, name)
        if mask.any():
            result[name] = float(np.sqrt(np.mean(differences[mask] ** 2)))
    return result


def hit_rate(values: Sequence[float], threshold: float = DEFAULT_HIT_THRESHOLD) -> float:
    """Share of values strictly below the threshold."""
    if not len(values):
        raise ValidationError("hit rate needs at least one value", field="values")
    if threshold < 0:
        raise ValidationError("threshold must be non-negative", field="threshold")
    hits = sum(1 for value in values if value < threshold)
    return hits / len(values)
