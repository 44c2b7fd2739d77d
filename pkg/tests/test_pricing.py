import math

import numpy as np
import pytest

from curvekit.curves import FlatCurve, InterpolatedCurve, YieldCurve
from curvekit.errors import DomainError, FitError, NoSolutionError
from curvekit.market_data import BenchmarkCurve, Bond, Cashflow, MarketSnapshot
from curvekit.nss import NssCurve, NssParams
from curvekit.pricing import (
    FlowTable,
    bootstrap,
    discount_factor,
    flat_curve,
    forward_rate,
    macaulay_duration,
    present_value,
    price_weights,
    yield_to_maturity,
)
from curvekit.scenarios import ScenarioSpec, generate_scenario


def _coupon_bond(bond_id: str, maturity: float, coupon: float, price: float = 100.0) -> Bond:
    times = np.arange(maturity, 0, -1.0)[::-1]
    return Bond(
        id=bond_id,
        cashflows=tuple(Cashflow(float(t), coupon) for t in times),
        face_value=100.0,
        maturity=maturity,
        market_price=price,
    )


def test_discount_factor_continuous_compounding() -> None:
    assert discount_factor(FlatCurve(0.03), 2.0) == pytest.approx(math.exp(-0.06), rel=1e-15)
    assert discount_factor(FlatCurve(0.03), 1e-9) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        discount_factor(FlatCurve(0.03), 0.0)


def test_present_value_sums_discounted_flows() -> None:
    bond = _coupon_bond("C1", 2.0, 5.0)
    curve = FlatCurve(0.04)

    expected = 5.0 * math.exp(-0.04) + 105.0 * math.exp(-0.08)
    assert present_value(curve, bond) == pytest.approx(expected, rel=1e-14)


def test_ytm_recovers_flat_rate() -> None:
    template = _coupon_bond("C1", 7.0, 4.0)
    bond = template.with_price(present_value(FlatCurve(0.03), template))

    assert yield_to_maturity(bond) == pytest.approx(0.03, abs=1e-9)


def test_ytm_round_trip_on_synthetic_bonds() -> None:
    snapshot = generate_scenario(ScenarioSpec(regime="falling", n_bonds=200, seed=21, price_noise_sd=0.01))

    for bond in snapshot.bonds:
        rate = yield_to_maturity(bond)
        assert abs(present_value(flat_curve(rate), bond) - bond.market_price) / bond.market_price <= 1e-8


def test_ytm_out_of_bracket_reports_bond() -> None:
    bond = _coupon_bond("RICH", 3.0, 1.0, price=500.0)

    with pytest.raises(NoSolutionError) as exc_info:
        yield_to_maturity(bond)

    assert exc_info.value.bond_id == "RICH"


def test_macaulay_duration_bounds() -> None:
    zero = Bond(id="Z", cashflows=(), face_value=100.0, maturity=4.0, market_price=90.0)
    coupon = _coupon_bond("C", 4.0, 5.0, price=101.0)

    assert macaulay_duration(zero) == pytest.approx(4.0)
    assert 0 < macaulay_duration(coupon) < coupon.maturity


def test_forward_rate_on_flat_and_linear_curves() -> None:
    assert forward_rate(FlatCurve(0.025), 3.0) == pytest.approx(0.025)

    curve = InterpolatedCurve(times=(1.0, 5.0), rates=(0.01, 0.05))
    # y(t) = 0.01 t between the knots, so f(t) = y + t y' = 0.02 t.
    assert forward_rate(curve, 3.0) == pytest.approx(0.06, rel=1e-8)
    with pytest.raises(DomainError):
        forward_rate(curve, 1e-5, h=1e-4)


def test_price_weights_follow_duration_formula(zero_coupon_snapshot: MarketSnapshot) -> None:
    bonds = zero_coupon_snapshot.bonds
    weights = price_weights(bonds)

    for bond, weight in zip(bonds, weights):
        expected = 1.0 / (len(bonds) * (bond.maturity * bond.market_price) ** 2)
        assert weight == pytest.approx(expected, rel=1e-10)


def test_flow_table_prices_match_present_value(scenario_snapshot: MarketSnapshot) -> None:
    flows = FlowTable.from_bonds(scenario_snapshot.bonds)
    curve = FlatCurve(0.035)

    model = flows.model_prices(curve.yields(flows.times))

    assert flows.bond_count == len(scenario_snapshot)
    expected = [present_value(curve, bond) for bond in scenario_snapshot.bonds]
    assert np.allclose(model, expected, rtol=1e-13)


def test_bootstrap_zero_coupons_recovers_flat_knots(zero_coupon_snapshot: MarketSnapshot) -> None:
    curve = bootstrap(zero_coupon_snapshot)

    assert curve.knot_times == tuple(b.maturity for b in zero_coupon_snapshot.by_maturity())
    assert np.allclose(curve.knot_yields, 0.02, atol=1e-9)
    assert curve.diagnostics == ()


@pytest.mark.parametrize("regime", ["flat", "rising", "falling"])
def test_bootstrap_reprices_noise_free_snapshot(regime: str) -> None:
    snapshot = generate_scenario(ScenarioSpec(regime=regime, n_bonds=60, seed=4))
    curve = bootstrap(snapshot)

    errors = [abs(present_value(curve, bond) - bond.market_price) / bond.market_price for bond in snapshot.bonds]
    assert max(errors) <= 1e-8


def test_bootstrap_skips_unsolvable_and_duplicate_bonds(flat_benchmark: BenchmarkCurve) -> None:
    bonds = (
        Bond(id="A", cashflows=(), face_value=100.0, maturity=1.0, market_price=98.0),
        Bond(id="B", cashflows=(), face_value=100.0, maturity=1.0, market_price=97.0),
        Bond(id="C", cashflows=(), face_value=100.0, maturity=2.0, market_price=400.0),
        Bond(id="D", cashflows=(), face_value=100.0, maturity=3.0, market_price=94.0),
    )
    curve = bootstrap(MarketSnapshot(date="2024-06-03", bonds=bonds, benchmark=flat_benchmark))

    assert curve.knot_times == (1.0, 3.0)
    assert [d.bond_id for d in curve.diagnostics] == ["B", "C"]


def test_bootstrap_with_no_solvable_bond_fails(flat_benchmark: BenchmarkCurve) -> None:
    bond = Bond(id="X", cashflows=(), face_value=100.0, maturity=1.0, market_price=1000.0)

    with pytest.raises(FitError, match="no knots"):
        bootstrap(MarketSnapshot(date="2024-06-03", bonds=(bond,), benchmark=flat_benchmark))


@pytest.mark.parametrize(
    "curve",
    [FlatCurve(0.02), NssCurve(NssParams(0.03, -0.01, 0.01, 0.005, 1.5, 6.0))],
)
def test_forward_rate_checks_step_for_analytic_curves(curve: YieldCurve) -> None:
    with pytest.raises(DomainError):
        forward_rate(curve, 1e-5, h=1e-4)
    with pytest.raises(DomainError):
        forward_rate(curve, 1.0, h=0.0)
    assert math.isfinite(forward_rate(curve, 1.0, h=1e-4))
