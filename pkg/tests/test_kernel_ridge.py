import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize

from curvekit.curves import YieldCurve
from curvekit.errors import InvalidDiscountError, SingularSystemError, ValidationError
from curvekit.kernel_ridge import (
    KernelParams,
    KrModel,
    _solve_symmetric,
    anchor_grid,
    build_kr_problem,
    fit_kr,
    kernel_derivative,
    kr_kernel,
    kr_yield,
)
from curvekit.market_data import BenchmarkCurve, Bond, MarketSnapshot
from curvekit.pricing import present_value
from curvekit.scenarios import ScenarioSpec, generate_scenario


def _small_snapshot(seed: int = 0) -> MarketSnapshot:
    return generate_scenario(ScenarioSpec(regime="rising", n_bonds=5, seed=seed, price_noise_sd=0.002))


def test_kernel_is_symmetric_and_vanishes_at_zero() -> None:
    params = KernelParams(a=2.0, b=0.5)

    assert kr_kernel(1.3, 4.2, params) == pytest.approx(kr_kernel(4.2, 1.3, params), rel=1e-14)
    assert kr_kernel(1e-12, 4.2, params) == pytest.approx(0.0, abs=1e-11)


def test_kernel_without_curvature_term_is_min_over_a() -> None:
    params = KernelParams(a=4.0, b=0.0)

    assert kr_kernel(2.0, 3.0, params) == pytest.approx(0.5)
    assert kr_kernel(5.0, 3.0, params) == pytest.approx(0.75)


@pytest.mark.parametrize("params", [KernelParams(), KernelParams(a=0.5, b=2.0), KernelParams(a=3.0, b=0.1)])
def test_kernel_reproduces_its_own_norm(params: KernelParams) -> None:
    s = 2.5

    def integrand(u: float) -> float:
        slope = float(kernel_derivative(u, s, params, order=1))
        curvature = float(kernel_derivative(u, s, params, order=2))
        return params.a * slope**2 + params.b * curvature**2

    left, _ = quad(integrand, 0.0, s, epsabs=1e-12)
    right, _ = quad(integrand, s, np.inf, epsabs=1e-12)

    assert left + right == pytest.approx(kr_kernel(s, s, params), rel=1e-7)


def test_kernel_matrices_are_positive_semidefinite() -> None:
    rng = np.random.default_rng(8)
    for _ in range(50):
        size = int(rng.integers(2, 21))
        times = rng.uniform(0.01, 30.0, size=size)
        params = KernelParams(a=float(rng.uniform(0.1, 5.0)), b=float(rng.uniform(0.0, 5.0)))
        matrix = kernel_derivative(times[:, None], times[None, :], params)
        assert np.linalg.eigvalsh(matrix).min() >= -1e-10


def test_kernel_params_validation() -> None:
    with pytest.raises(ValidationError):
        KernelParams(a=0.0, b=1.0)
    with pytest.raises(ValidationError):
        KernelParams(a=-1.0, b=1.0)
    with pytest.raises(ValidationError):
        fit_kr(_small_snapshot(), lam=0.0)


def test_anchor_grid_is_union_of_cashflow_dates() -> None:
    snapshot = _small_snapshot()
    anchors = anchor_grid(snapshot)

    expected = sorted({float(t) for bond in snapshot.bonds for t in bond.flows()[0]})
    assert anchors.tolist() == pytest.approx(expected)
    assert np.all(np.diff(anchors) > 1e-9)


def test_closed_form_beats_first_order_oracle() -> None:
    for seed in range(3):
        snapshot = _small_snapshot(seed)
        params = KernelParams()
        model = fit_kr(snapshot, lam=1e-2, kernel_params=params)
        problem = build_kr_problem(snapshot, 1e-2, params)

        oracle = minimize(
            problem.objective,
            np.zeros(len(problem.anchor_times)),
            jac=problem.gradient,
            method="L-BFGS-B",
            options={"maxiter": 10_000, "ftol": 1e-20, "gtol": 1e-14},
        )
        closed = problem.objective(np.array(model.alphas))

        assert closed <= oracle.fun * (1 + 1e-8)
        assert np.allclose(problem.gradient(np.array(model.alphas)), 0.0, atol=1e-9)


def test_gradient_matches_finite_differences() -> None:
    problem = build_kr_problem(_small_snapshot(), 1e-2, KernelParams())
    rng = np.random.default_rng(1)
    alphas = rng.normal(0.0, 1e-3, size=len(problem.anchor_times))

    step = 1e-7
    numeric = np.array(
        [
            (problem.objective(alphas + step * e) - problem.objective(alphas - step * e)) / (2 * step)
            for e in np.eye(len(alphas))
        ]
    )
    assert np.allclose(problem.gradient(alphas), numeric, rtol=1e-5, atol=1e-10)


def test_tiny_lambda_nearly_interpolates(flat_benchmark: BenchmarkCurve) -> None:
    bond = Bond(id="Z", cashflows=(), face_value=100.0, maturity=4.0, market_price=92.0)
    snapshot = MarketSnapshot(date="2024-06-03", bonds=(bond,), benchmark=flat_benchmark)

    model = fit_kr(snapshot, lam=1e-10)

    assert abs(present_value(model, bond) - bond.market_price) <= 0.1


def test_price_error_grows_with_lambda() -> None:
    snapshot = generate_scenario(ScenarioSpec(regime="falling", n_bonds=12, seed=5, price_noise_sd=0.003))
    params = KernelParams()
    errors = []
    for lam in (1e-6, 1e-4, 1e-2, 1.0, 1e2):
        model = fit_kr(snapshot, lam=lam, kernel_params=params)
        errors.append(build_kr_problem(snapshot, lam, params).price_error(np.array(model.alphas)))

    for smaller, larger in zip(errors, errors[1:]):
        assert larger >= smaller * (1 - 1e-6) - 1e-18


def test_discount_tends_to_one_at_short_end() -> None:
    model = fit_kr(_small_snapshot())

    assert abs(float(np.asarray(model.discount_hat(1e-8))) - 1.0) <= 1e-6
    assert np.allclose(model.discount(np.array([1.0, 3.0])), np.exp(-np.array([1.0, 3.0]) * model.yields(np.array([1.0, 3.0]))))


def test_analytic_forward_matches_central_difference() -> None:
    model = fit_kr(generate_scenario(ScenarioSpec(n_bonds=15, seed=9)))
    times = np.array([0.5, 2.0, 6.0, 12.0])

    assert np.allclose(model.forward(times), YieldCurve.forward(model, times, 1e-4), atol=1e-6)


def test_non_positive_discount_is_reported() -> None:
    model = KrModel(anchor_times=(1.0,), alphas=(-10.0,), lam=1.0)

    with pytest.raises(InvalidDiscountError) as exc_info:
        kr_yield(model, 5.0)

    assert exc_info.value.t == pytest.approx(5.0)
    assert exc_info.value.discount <= 0


def test_singular_system_reports_condition_number() -> None:
    with pytest.raises(SingularSystemError) as exc_info:
        _solve_symmetric(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))

    assert exc_info.value.condition_number == pytest.approx(3.0)


def test_model_round_trips_through_dict() -> None:
    model = fit_kr(_small_snapshot(), lam=0.05, kernel_params=KernelParams(a=2.0, b=0.5))
    payload = model.to_dict()

    assert payload["kind"] == "kr"
    assert payload["lambda"] == 0.05
    assert payload["kernel_params"] == {"a": 2.0, "b": 0.5}
    restored = KrModel(
        anchor_times=payload["anchor_times"],  # type: ignore[arg-type]
        alphas=payload["alphas"],  # type: ignore[arg-type]
        lam=payload["lambda"],  # type: ignore[arg-type]
        kernel_params=KernelParams(**payload["kernel_params"]),  # type: ignore[arg-type]
    )
    assert restored == model
    assert math.isclose(kr_yield(restored, 3.0), kr_yield(model, 3.0))
