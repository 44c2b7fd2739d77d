"""Single-hidden-layer network yield curve trained on bond prices.

    y(t) = sum_i v_i tanh(w_i t + b_i) + c

Gradients are written out by hand. Parameter vectors are laid out as
[w (H), b (H), v (H), c].
"""

from dataclasses import asdict, dataclass
import logging
import math
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from curvekit.curves import YieldCurve, as_times
from curvekit.errors import DivergenceError, ValidationError
from curvekit.market_data import BenchmarkCurve, MarketSnapshot
from curvekit.metrics import DEFAULT_TENORS
from curvekit.pricing import FlowTable, ytm_array


logger = logging.getLogger(__name__)

RegularizerMode = Literal["per_bond", "per_epoch"]
REGULARIZER_MODES: tuple[str, ...] = ("per_bond", "per_epoch")


@dataclass(frozen=True)
class NnParams:
    w: tuple[float, ...]
    b: tuple[float, ...]
    v: tuple[float, ...]
    c: float

    def __post_init__(self) -> None:
        for name in ("w", "b", "v"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        object.__setattr__(self, "c", float(self.c))
        if not self.w:
            raise ValidationError("hidden_count must be at least 1", field="H")
        if not len(self.w) == len(self.b) == len(self.v):
            raise ValidationError("w, b and v must have hidden_count entries each", field="H")
        if not all(math.isfinite(x) for x in (*self.w, *self.b, *self.v, self.c)):
            raise ValidationError("parameters must be finite", field="nn")

    @property
    def hidden_count(self) -> int:
        return len(self.w)

    def to_vector(self) -> np.ndarray:
        return np.array([*self.w, *self.b, *self.v, self.c])

    @classmethod
    def from_vector(cls, theta: np.ndarray, hidden_count: int) -> "NnParams":
        w, b, v, c = _split(np.asarray(theta, dtype=float), hidden_count)
        return cls(w=tuple(w), b=tuple(b), v=tuple(v), c=float(c))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-8
    epochs: int = 1000
    gamma1: float = 1e3
    gamma2: float = 1e4
    grid: tuple[float, ...] = DEFAULT_TENORS
    seed: int = 0
    init_scale: float = 0.1
    hidden_count: int = 3
    regularizer_mode: RegularizerMode = "per_bond"

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive", field="learning_rate")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1", field="epochs")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValidationError("gamma1 and gamma2 must be non-negative", field="gamma")
        if len(self.grid) < 2 or self.grid[0] <= 0 or any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid must be positive and strictly increasing with two or more points", field="grid")
        if self.init_scale < 0:
            raise ValidationError("init_scale must be non-negative", field="init_scale")
        if self.hidden_count < 1:
            raise ValidationError("hidden_count must be at least 1", field="hidden_count")
        if self.regularizer_mode not in REGULARIZER_MODES:
            raise ValidationError(f"regularizer_mode must be one of {REGULARIZER_MODES}", field="regularizer_mode")

    def to_dict(self) -> dict[str, object]:
        payload = asdict(self)
        payload["grid"] = list(self.grid)
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "TrainConfig":
        return cls(**payload)  # type: ignore[arg-type]


def _split(theta: np.ndarray, hidden: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    return theta[:hidden], theta[hidden : 2 * hidden], theta[2 * hidden : 3 * hidden], theta[3 * hidden]


def _forward(theta: np.ndarray, hidden: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, b, v, c = _split(theta, hidden)
    activations = np.tanh(np.multiply.outer(t, w) + b)
    return activations @ v + c, activations


def _jacobian(theta: np.ndarray, hidden: int, t: np.ndarray, activations: np.ndarray) -> np.ndarray:
    """dy(t_k)/dtheta, one row per time."""
    _, _, v, _ = _split(theta, hidden)
    inner = v * (1.0 - activations**2)
    return np.hstack([inner * t[:, None], inner, activations, np.ones((len(t), 1))])


def _error_terms(theta: np.ndarray, hidden: int, flows: FlowTable) -> tuple[np.ndarray, np.ndarray]:
    """Pricing residuals p_hat - p and their Jacobian, one row per bond."""
    yields, activations = _forward(theta, hidden, flows.times)
    discounted = flows.amounts * np.exp(-flows.times * yields)
    residuals = np.bincount(flows.owner, weights=discounted, minlength=flows.bond_count) - flows.prices
    contributions = (-flows.times * discounted)[:, None] * _jacobian(theta, hidden, flows.times, activations)
    jacobian = np.zeros((flows.bond_count, len(theta)))
    np.add.at(jacobian, flows.owner, contributions)
    return residuals, jacobian


def _grid_slopes(theta: np.ndarray, hidden: int, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    yields, activations = _forward(theta, hidden, grid)
    jacobian = _jacobian(theta, hidden, grid, activations)
    gaps = np.diff(grid)
    return np.diff(yields) / gaps, (jacobian[1:] - jacobian[:-1]) / gaps[:, None]


def _smooth_terms(theta: np.ndarray, hidden: int, grid: np.ndarray) -> tuple[float, np.ndarray]:
    slopes, slope_jacobian = _grid_slopes(theta, hidden, grid)
    # np.argmax breaks ties towards the lower index.
    index = int(np.argmax(np.abs(slopes)))
    return float(abs(slopes[index])), np.sign(slopes[index]) * slope_jacobian[index]


def _trend_terms(theta: np.ndarray, hidden: int, grid: np.ndarray, benchmark_slopes: np.ndarray) -> tuple[float, np.ndarray]:
    slopes, slope_jacobian = _grid_slopes(theta, hidden, grid)
    gaps = slopes - benchmark_slopes
    # Sums N - 1 slope gaps but divides by the grid size N.
    count = len(grid)
    return float(np.sum(np.abs(gaps)) / count), np.sign(gaps) @ slope_jacobian / count


def _benchmark_slopes(benchmark: BenchmarkCurve, grid: np.ndarray) -> np.ndarray:
    return np.diff(benchmark.yields(grid)) / np.diff(grid)


def _regularizer_terms(
    theta: np.ndarray,
    hidden: int,
    grid: np.ndarray,
    benchmark_slopes: np.ndarray,
    gamma1: float,
    gamma2: float,
) -> tuple[float, np.ndarray]:
    value = 0.0
    gradient = np.zeros_like(theta)
    if gamma1:
        smooth, smooth_grad = _smooth_terms(theta, hidden, grid)
        value += gamma1 * smooth
        gradient += gamma1 * smooth_grad
    if gamma2:
        trend, trend_grad = _trend_terms(theta, hidden, grid, benchmark_slopes)
        value += gamma2 * trend
        gradient += gamma2 * trend_grad
    return value, gradient


def nn_yield(params: NnParams, t: ArrayLike) -> float | np.ndarray:
    times = as_times(t, allow_zero=True)
    values, _ = _forward(params.to_vector(), params.hidden_count, times)
    return float(values) if values.ndim == 0 else values


def loss_error(params: NnParams, snapshot: MarketSnapshot) -> float:
    residuals, _ = _error_terms(params.to_vector(), params.hidden_count, FlowTable.from_bonds(snapshot.bonds))
    return float(np.mean(residuals**2))


def loss_error_gradient(params: NnParams, snapshot: MarketSnapshot) -> np.ndarray:
    residuals, jacobian = _error_terms(params.to_vector(), params.hidden_count, FlowTable.from_bonds(snapshot.bonds))
    return 2.0 * residuals @ jacobian / len(residuals)


def loss_smooth(params: NnParams, grid: ArrayLike = DEFAULT_TENORS) -> float:
    return _smooth_terms(params.to_vector(), params.hidden_count, np.asarray(grid, dtype=float))[0]


def loss_smooth_gradient(params: NnParams, grid: ArrayLike = DEFAULT_TENORS) -> np.ndarray:
    return _smooth_terms(params.to_vector(), params.hidden_count, np.asarray(grid, dtype=float))[1]


def loss_trend(params: NnParams, benchmark: BenchmarkCurve, grid: ArrayLike = DEFAULT_TENORS) -> float:
    grid = np.asarray(grid, dtype=float)
    return _trend_terms(params.to_vector(), params.hidden_count, grid, _benchmark_slopes(benchmark, grid))[0]


def loss_trend_gradient(params: NnParams, benchmark: BenchmarkCurve, grid: ArrayLike = DEFAULT_TENORS) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    return _trend_terms(params.to_vector(), params.hidden_count, grid, _benchmark_slopes(benchmark, grid))[1]


def total_loss(params: NnParams, snapshot: MarketSnapshot, config: TrainConfig | None = None) -> float:
    config = config or TrainConfig()
    return (
        loss_error(params, snapshot)
        + config.gamma1 * loss_smooth(params, config.grid)
        + config.gamma2 * loss_trend(params, snapshot.benchmark, config.grid)
    )


def total_loss_gradient(params: NnParams, snapshot: MarketSnapshot, config: TrainConfig | None = None) -> np.ndarray:
    config = config or TrainConfig()
    return (
        loss_error_gradient(params, snapshot)
        + config.gamma1 * loss_smooth_gradient(params, config.grid)
        + config.gamma2 * loss_trend_gradient(params, snapshot.benchmark, config.grid)
    )


def initial_params(snapshot: MarketSnapshot, config: TrainConfig) -> NnParams:
    rng = np.random.default_rng(config.seed)
    maturities = np.array([bond.maturity for bond in snapshot.bonds])
    span = float(np.ptp(maturities)) or float(maturities.max())
    hidden = config.hidden_count
    w = rng.normal(0.0, config.init_scale / span, size=hidden)
    b = rng.normal(0.0, config.init_scale, size=hidden)
    v = rng.normal(0.0, config.init_scale, size=hidden)
    c = float(np.mean(ytm_array(snapshot.bonds)))
    return NnParams(w=tuple(w), b=tuple(b), v=tuple(v), c=c)


def train(snapshot: MarketSnapshot, config: TrainConfig | None = None, *, initial: NnParams | None = None) -> NnParams:
    """Per-bond gradient descent over ascending maturities, repeated for every epoch.

    In per_bond mode each step minimizes (p_j - p_hat_j)^2 + gamma1 L_smooth + gamma2 L_trend.
    In per_epoch mode bond steps use the price term only and one regularizer step
    closes each epoch; a divergence there reports bond_index equal to the bond count.
    """
    config = config or TrainConfig()
    start = initial or initial_params(snapshot, config)
    hidden = start.hidden_count
    theta = start.to_vector()
    grid = np.array(config.grid)
    benchmark_slopes = _benchmark_slopes(snapshot.benchmark, grid)
    bonds: list[tuple[np.ndarray, np.ndarray, float]] = []
    for bond in snapshot.by_maturity():
        times, amounts = bond.flows()
        bonds.append((times, amounts, bond.market_price))
    per_bond = config.regularizer_mode == "per_bond"
    rate = config.learning_rate

    for epoch in range(1, config.epochs + 1):
        for index, (times, amounts, price) in enumerate(bonds):
            yields, activations = _forward(theta, hidden, times)
            discounted = amounts * np.exp(-times * yields)
            residual = float(np.sum(discounted)) - price
            loss = residual * residual
            gradient = 2.0 * residual * ((-times * discounted) @ _jacobian(theta, hidden, times, activations))
            if per_bond:
                penalty, penalty_grad = _regularizer_terms(
                    theta, hidden, grid, benchmark_slopes, config.gamma1, config.gamma2
                )
                loss += penalty
                gradient = gradient + penalty_grad
            if not math.isfinite(loss) or not np.all(np.isfinite(gradient)):
                raise DivergenceError(epoch=epoch, bond_index=index, loss=loss)
            theta = theta - rate * gradient

        if not per_bond:
            penalty, penalty_grad = _regularizer_terms(theta, hidden, grid, benchmark_slopes, config.gamma1, config.gamma2)
            if not math.isfinite(penalty) or not np.all(np.isfinite(penalty_grad)):
                raise DivergenceError(epoch=epoch, bond_index=len(bonds), loss=penalty)
            theta = theta - rate * penalty_grad

    if not np.all(np.isfinite(theta)):
        raise DivergenceError(epoch=config.epochs, bond_index=len(bonds) - 1, loss=math.nan)
    params = NnParams.from_vector(theta, hidden)
    final_loss = total_loss(params, snapshot, config)
    if not math.isfinite(final_loss):
        raise DivergenceError(epoch=config.epochs, bond_index=len(bonds) - 1, loss=final_loss)
    logger.info(
        "nn training finished",
        extra={"epochs": config.epochs, "bonds": len(bonds), "loss": final_loss, "seed": config.seed},
    )
    return params


@dataclass(frozen=True)
class NnCurve(YieldCurve):
    params: NnParams
    config: TrainConfig | None = None
    kind = "nn"

    def yields(self, t: np.ndarray) -> np.ndarray:
        values, _ = _forward(self.params.to_vector(), self.params.hidden_count, np.asarray(t, dtype=float))
        return values

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        times = as_times(t)
        w = np.array(self.params.w)
        v = np.array(self.params.v)
        yields, activations = _forward(self.params.to_vector(), self.params.hidden_count, times)
        slope = (1.0 - activations**2) @ (v * w)
        return yields + times * slope

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "H": self.params.hidden_count,
            "w": list(self.params.w),
            "b": list(self.params.b),
            "v": list(self.params.v),
            "c": self.params.c,
            "config_echo": self.config.to_dict() if self.config else None,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "NnCurve":
        params = NnParams(w=payload["w"], b=payload["b"], v=payload["v"], c=payload["c"])  # type: ignore[arg-type]
        if params.hidden_count != payload.get("H", params.hidden_count):
            raise ValidationError("H does not match the stored weights", field="H")
        echo = payload.get("config_echo")
        return cls(params=params, config=TrainConfig.from_dict(echo) if echo else None)  # type: ignore[arg-type]


def fit_nn(snapshot: MarketSnapshot, config: TrainConfig | None = None) -> NnCurve:
    config = config or TrainConfig()
    return NnCurve(params=train(snapshot, config), config=config)
