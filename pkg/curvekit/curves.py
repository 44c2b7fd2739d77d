"""Evaluable yield curves.

Every curve maps a time in years to a continuously-compounded spot yield. Discount
factors and instantaneous forwards are derived from the yields unless a curve can
do better analytically.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from curvekit.errors import DomainError, ValidationError


MIN_TIME = 1e-9


def as_times(t: ArrayLike, *, allow_zero: bool = False) -> np.ndarray:
    times = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(times)):
        raise DomainError("times must be finite", field="t")
    if allow_zero:
        if np.any(times < 0):
            raise DomainError("times must be non-negative", field="t")
    elif np.any(times <= 0):
        raise DomainError("times must be positive", field="t")
    return times


class YieldCurve(ABC):
    kind: str = "curve"

    @abstractmethod
    def yields(self, t: np.ndarray) -> np.ndarray:
        """Spot yields at an array of positive times."""

    def yield_at(self, t: float) -> float:
        return float(self.yields(as_times(np.array([t])))[0])

    def discount(self, t: ArrayLike) -> np.ndarray:
        times = np.maximum(as_times(t), MIN_TIME)
        return np.exp(-times * self.yields(times))

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        times = as_times(t)
        if h <= 0 or np.any(times - h <= 0):
            raise DomainError("central difference needs t > h > 0", field="h")
        slope = (self.yields(times + h) - self.yields(times - h)) / (2.0 * h)
        return self.yields(times) + times * slope

    def to_dict(self) -> dict[str, object]:
        raise NotImplementedError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True)
class FlatCurve(YieldCurve):
    rate: float
    kind = "flat"

    def yields(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), float(self.rate))

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        return np.full(np.shape(as_times(t)), float(self.rate))

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class InterpolatedCurve(YieldCurve):
    """Linear in yield between knots, flat beyond the first and last knot."""

    times: tuple[float, ...]
    rates: tuple[float, ...]
    kind = "interpolated"

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "rates", tuple(float(x) for x in self.rates))
        if len(self.times) != len(self.rates):
            raise ValidationError("times and rates must have equal length", field="rates")
        if not self.times:
            raise ValidationError("at least one knot is required", field="times")
        if any(x <= 0 for x in self.times):
            raise ValidationError("knot times must be positive", field="times")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValidationError("knot times must be strictly increasing", field="times")
        if not all(np.isfinite(self.rates)):
            raise ValidationError("rates must be finite", field="rates")

    def yields(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.rates)

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "times": list(self.times), "rates": list(self.rates)}


@dataclass(frozen=True)
class SpreadCurve(YieldCurve):
    base: YieldCurve
    spread: float
    kind = "spread"

    def yields(self, t: np.ndarray) -> np.ndarray:
        return self.base.yields(t) + self.spread

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        return self.base.forward(t, h) + self.spread

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "base": self.base.to_dict(), "spread": self.spread}
