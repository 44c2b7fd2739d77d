from collections.abc import Iterable
from dataclasses import dataclass, replace
import math

import numpy as np

from curvekit.curves import YieldCurve
from curvekit.errors import ValidationError


MATURITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Cashflow:
    time: float
    amount: float


@dataclass(frozen=True)
class Bond:
    id: str
    cashflows: tuple[Cashflow, ...]
    face_value: float
    maturity: float
    market_price: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "cashflows", tuple(self.cashflows))
        if not str(self.id).strip():
            raise ValidationError("id is required", field="id")
        for name in ("face_value", "maturity", "market_price"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(f"must be positive, got {value}", bond_id=self.id, field=name)
        previous = 0.0
        for cashflow in self.cashflows:
            if not math.isfinite(cashflow.time) or cashflow.time <= 0:
                raise ValidationError("cashflow times must be positive", bond_id=self.id, field="cashflows")
            if not math.isfinite(cashflow.amount) or cashflow.amount <= 0:
                raise ValidationError("cashflow amounts must be positive", bond_id=self.id, field="cashflows")
            if cashflow.time <= previous:
                raise ValidationError("cashflow times must be strictly increasing", bond_id=self.id, field="cashflows")
            previous = cashflow.time
        if self.cashflows and abs(self.cashflows[-1].time - self.maturity) > MATURITY_TOLERANCE:
            raise ValidationError(
                f"maturity {self.maturity} differs from last cashflow time {self.cashflows[-1].time}",
                bond_id=self.id,
                field="maturity",
            )

    @property
    def is_zero_coupon(self) -> bool:
        return not self.cashflows

    def flows(self) -> tuple[np.ndarray, np.ndarray]:
        """Payment times and amounts with the redemption folded into the final payment."""
        if not self.cashflows:
            return np.array([self.maturity]), np.array([self.face_value])
        times = np.array([cf.time for cf in self.cashflows[:-1]] + [self.maturity])
        amounts = np.array([cf.amount for cf in self.cashflows])
        amounts[-1] += self.face_value
        return times, amounts

    def with_price(self, market_price: float) -> "Bond":
        return replace(self, market_price=market_price)


@dataclass(frozen=True)
class BenchmarkCurve(YieldCurve):
    """Risk-free reference curve, linear in yield between tenors and flat outside."""

    tenors: tuple[float, ...]
    rates: tuple[float, ...]
    kind = "benchmark"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tenors", tuple(float(x) for x in self.tenors))
        object.__setattr__(self, "rates", tuple(float(x) for x in self.rates))
        if len(self.tenors) != len(self.rates):
            raise ValidationError("tenors and rates must have equal length", field="benchmark")
        if len(self.tenors) < 2:
            raise ValidationError("at least two tenors are required", field="benchmark")
        if any(t <= 0 for t in self.tenors):
            raise ValidationError("tenors must be positive", field="benchmark")
        if any(b <= a for a, b in zip(self.tenors, self.tenors[1:])):
            raise ValidationError("tenors must be strictly increasing", field="benchmark")
        if not all(math.isfinite(r) for r in self.rates):
            raise ValidationError("rates must be finite", field="benchmark")

    def yields(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.tenors, self.rates)

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "tenors": list(self.tenors), "rates": list(self.rates)}


@dataclass(frozen=True)
class MarketSnapshot:
    date: str
    bonds: tuple[Bond, ...]
    benchmark: BenchmarkCurve

    def __post_init__(self) -> None:
        object.__setattr__(self, "bonds", tuple(self.bonds))
        if not self.bonds:
            raise ValidationError("bonds non-empty", field="bonds")
        seen: set[str] = set()
        for bond in self.bonds:
            if bond.id in seen:
                raise ValidationError("bond ids must be unique within a snapshot", bond_id=bond.id, field="id")
            seen.add(bond.id)

    def __len__(self) -> int:
        return len(self.bonds)

    @property
    def bond_ids(self) -> list[str]:
        return [bond.id for bond in self.bonds]

    def bond(self, bond_id: str) -> Bond:
        for bond in self.bonds:
            if bond.id == bond_id:
                return bond
        raise ValidationError("bond not found in snapshot", bond_id=bond_id, field="id")

    def without(self, bond_ids: Iterable[str]) -> "MarketSnapshot":
        dropped = set(bond_ids)
        missing = dropped - set(self.bond_ids)
        if missing:
            raise ValidationError("bond not found in snapshot", bond_id=sorted(missing)[0], field="id")
        return replace(self, bonds=tuple(b for b in self.bonds if b.id not in dropped))

    def with_bond_price(self, bond_id: str, market_price: float) -> "MarketSnapshot":
        self.bond(bond_id)
        return replace(
            self,
            bonds=tuple(b.with_price(market_price) if b.id == bond_id else b for b in self.bonds),
        )

    def by_maturity(self) -> list[Bond]:
        return sorted(self.bonds, key=lambda b: (b.maturity, b.id))
