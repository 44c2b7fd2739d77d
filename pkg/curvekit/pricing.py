from collections.abc import Sequence
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.optimize import brentq

from curvekit.curves import FlatCurve, InterpolatedCurve, YieldCurve
from curvekit.errors import DomainError, FitError, NoSolutionError
from curvekit.market_data import MATURITY_TOLERANCE, Bond, MarketSnapshot


logger = logging.getLogger(__name__)

YIELD_BRACKET = (-0.10, 1.00)
NEWTON_POLISH_STEPS = 3


@dataclass(frozen=True)
class FlowTable:
    """All payments of a bond list flattened into parallel arrays."""

    times: np.ndarray
    amounts: np.ndarray
    owner: np.ndarray
    prices: np.ndarray
    maturities: np.ndarray

    @classmethod
    def from_bonds(cls, bonds: Sequence[Bond]) -> "FlowTable":
        times: list[np.ndarray] = []
        amounts: list[np.ndarray] = []
        owner: list[np.ndarray] = []
        for index, bond in enumerate(bonds):
            bond_times, bond_amounts = bond.flows()
            times.append(bond_times)
            amounts.append(bond_amounts)
            owner.append(np.full(len(bond_times), index))
        return cls(
            times=np.concatenate(times),
            amounts=np.concatenate(amounts),
            owner=np.concatenate(owner),
            prices=np.array([bond.market_price for bond in bonds]),
            maturities=np.array([bond.maturity for bond in bonds]),
        )

    @property
    def bond_count(self) -> int:
        return len(self.prices)

    def model_prices(self, yields: np.ndarray) -> np.ndarray:
        """Present values given the curve's yields at every payment time."""
        discounted = self.amounts * np.exp(-self.times * yields)
        return np.bincount(self.owner, weights=discounted, minlength=self.bond_count)


def discount_factor(curve: YieldCurve, t: float) -> float:
    return float(curve.discount(np.array([t]))[0])


def present_value(curve: YieldCurve, bond: Bond) -> float:
    times, amounts = bond.flows()
    return float(np.sum(amounts * curve.discount(times)))


def _flat_pv(rate: float, times: np.ndarray, amounts: np.ndarray) -> float:
    return float(np.sum(amounts * np.exp(-times * rate)))


def yield_to_maturity(bond: Bond) -> float:
    """Flat continuously-compounded rate that reprices the bond to its market price."""
    times, amounts = bond.flows()
    price = bond.market_price

    def residual(rate: float) -> float:
        return _flat_pv(rate, times, amounts) - price

    low, high = YIELD_BRACKET
    upper_price = _flat_pv(low, times, amounts)
    lower_price = _flat_pv(high, times, amounts)
    if not lower_price <= price <= upper_price:
        raise NoSolutionError(
            f"price {price} outside solvable range [{lower_price:.6g}, {upper_price:.6g}]",
            bond_id=bond.id,
        )

    rate = brentq(residual, low, high, xtol=1e-15, rtol=1e-15, maxiter=200)
    for _ in range(NEWTON_POLISH_STEPS):
        error = residual(rate)
        if abs(error) <= 1e-14 * price:
            break
        slope = -float(np.sum(times * amounts * np.exp(-times * rate)))
        candidate = rate - error / slope
        if abs(residual(candidate)) >= abs(error):
            break
        rate = candidate
    return float(rate)


def macaulay_duration(bond: Bond, ytm: float | None = None) -> float:
    rate = yield_to_maturity(bond) if ytm is None else ytm
    times, amounts = bond.flows()
    weights = amounts * np.exp(-times * rate)
    return float(np.sum(times * weights) / np.sum(weights))


def forward_rate(curve: YieldCurve, t: float, h: float = 1e-4) -> float:
    """Instantaneous forward at t; requires t > h > 0 for every curve."""
    if not 0 < h < t:
        raise DomainError("forward rate needs t > h > 0", field="h")
    return float(curve.forward(np.array([t]), h)[0])


def price_weights(bonds: Sequence[Bond]) -> np.ndarray:
    """Duration weights 1 / (M (D_j p_j)^2) shared by the price-error estimators."""
    count = len(bonds)
    durations = np.array([macaulay_duration(bond) for bond in bonds])
    prices = np.array([bond.market_price for bond in bonds])
    return 1.0 / (count * (durations * prices) ** 2)


@dataclass(frozen=True)
class BootstrapDiagnostic:
    bond_id: str
    reason: str


@dataclass(frozen=True)
class BootstrapCurve(InterpolatedCurve):
    diagnostics: tuple[BootstrapDiagnostic, ...] = field(default=())
    kind = "bootstrap"

    @property
    def knot_times(self) -> tuple[float, ...]:
        return self.times

    @property
    def knot_yields(self) -> tuple[float, ...]:
        return self.rates

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "knot_times": list(self.times),
            "knot_yields": list(self.rates),
            "diagnostics": [{"bond_id": d.bond_id, "reason": d.reason} for d in self.diagnostics],
        }


def _solve_knot(bond: Bond, knot_times: list[float], knot_yields: list[float]) -> float:
    times, amounts = bond.flows()
    trial_times = np.array(knot_times + [bond.maturity])

    def residual(rate: float) -> float:
        yields = np.interp(times, trial_times, np.array(knot_yields + [rate]))
        return float(np.sum(amounts * np.exp(-times * yields))) - bond.market_price

    low, high = YIELD_BRACKET
    at_low, at_high = residual(low), residual(high)
    if not (at_high <= 0.0 <= at_low):
        raise NoSolutionError(
            f"no knot yield in [{low}, {high}] reprices the bond (residuals {at_low:.6g}, {at_high:.6g})",
            bond_id=bond.id,
        )
    return float(brentq(residual, low, high, xtol=1e-15, rtol=1e-15, maxiter=200))


def bootstrap(snapshot: MarketSnapshot) -> BootstrapCurve:
    """Sequential exact fit from the shortest to the longest maturity.

    Payments between the previous knot and the bond's maturity sit on the line
    towards the unknown knot, so every accepted bond reprices exactly on the
    final curve.
    """
    knot_times: list[float] = []
    knot_yields: list[float] = []
    diagnostics: list[BootstrapDiagnostic] = []

    for bond in snapshot.by_maturity():
        if knot_times and bond.maturity - knot_times[-1] <= MATURITY_TOLERANCE:
            diagnostics.append(BootstrapDiagnostic(bond.id, f"duplicate maturity {bond.maturity}; knot kept from earlier bond"))
            logger.info("bootstrap skipped duplicate maturity", extra={"bond_id": bond.id})
            continue
        try:
            rate = _solve_knot(bond, knot_times, knot_yields)
        except NoSolutionError as exc:
            diagnostics.append(BootstrapDiagnostic(bond.id, str(exc)))
            logger.warning("bootstrap skipped bond", extra={"bond_id": bond.id, "error": str(exc)})
            continue
        knot_times.append(bond.maturity)
        knot_yields.append(rate)

    if not knot_times:
        raise FitError("bootstrap produced no knots; every bond failed to solve")
    return BootstrapCurve(times=tuple(knot_times), rates=tuple(knot_yields), diagnostics=tuple(diagnostics))


def flat_curve(rate: float) -> FlatCurve:
    return FlatCurve(rate)


def ytm_array(bonds: Sequence[Bond]) -> np.ndarray:
    return np.array([yield_to_maturity(bond) for bond in bonds])
