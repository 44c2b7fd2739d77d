"""Nelson-Siegel and Svensson parametric curves and their price-based fit."""

from dataclasses import asdict, dataclass
import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import least_squares, minimize

from curvekit.curves import YieldCurve, as_times
from curvekit.errors import FitError, ValidationError
from curvekit.market_data import MarketSnapshot
from curvekit.pricing import FlowTable, price_weights, ytm_array


logger = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-4
BETA0_FLOOR = -0.10
BETA_BOUND = 1.0
BASE_DECAY_STARTS: tuple[tuple[float, float], ...] = (
    (1.0, 5.0),
    (0.5, 3.0),
    (2.0, 10.0),
    (4.0, 20.0),
    (0.3, 8.0),
    (1.5, 15.0),
    (3.0, 6.0),
    (0.8, 25.0),
)


@dataclass(frozen=True)
class NssParams:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    lambda1: float
    lambda2: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in asdict(self).values()):
            raise ValidationError("parameters must be finite", field="nss")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValidationError("decay scales must be positive", field="lambda")
        if self.beta0 <= BETA0_FLOOR:
            raise ValidationError(f"beta0 must exceed {BETA0_FLOOR}", field="beta0")


@dataclass(frozen=True)
class NssConfig:
    n_starts: int = 8
    max_iter: int = 4000
    seed: int = 0
    svensson: bool = True
    lambda_bounds: tuple[float, float] = (0.05, 30.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambda_bounds", tuple(float(x) for x in self.lambda_bounds))
        if self.n_starts < 1:
            raise ValidationError("n_starts must be at least 1", field="n_starts")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1", field="max_iter")
        low, high = self.lambda_bounds
        if not 0 < low < high:
            raise ValidationError("lambda_bounds needs 0 < min < max", field="lambda_bounds")

    @property
    def parameter_count(self) -> int:
        return 6 if self.svensson else 4


def _decay_loading(x: np.ndarray) -> np.ndarray:
    """(1 - e^-x) / x with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    exact = -np.expm1(-safe) / safe
    series = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    return np.where(small, series, exact)


def _yields(params: NssParams, t: np.ndarray) -> np.ndarray:
    x1 = t / params.lambda1
    x2 = t / params.lambda2
    slope1 = _decay_loading(x1)
    slope2 = _decay_loading(x2)
    return (
        params.beta0
        + params.beta1 * slope1
        + params.beta2 * (slope1 - np.exp(-x1))
        + params.beta3 * (slope2 - np.exp(-x2))
    )


def _forwards(params: NssParams, t: np.ndarray) -> np.ndarray:
    x1 = t / params.lambda1
    x2 = t / params.lambda2
    return (
        params.beta0
        + params.beta1 * np.exp(-x1)
        + params.beta2 * x1 * np.exp(-x1)
        + params.beta3 * x2 * np.exp(-x2)
    )


def nss_yield(params: NssParams, t: ArrayLike, *, allow_zero: bool = False) -> float | np.ndarray:
    times = as_times(t, allow_zero=allow_zero)
    values = _yields(params, times)
    return float(values) if values.ndim == 0 else values


def nss_forward(params: NssParams, t: ArrayLike) -> float | np.ndarray:
    times = as_times(t, allow_zero=True)
    values = _forwards(params, times)
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True)
class NssCurve(YieldCurve):
    params: NssParams
    objective: float | None = None
    kind = "nss"

    def yields(self, t: np.ndarray) -> np.ndarray:
        return _yields(self.params, np.asarray(t, dtype=float))

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        return _forwards(self.params, as_times(t))

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind, "params": asdict(self.params), "objective": self.objective}


def _params_from_vector(x: np.ndarray, svensson: bool) -> NssParams:
    if svensson:
        return NssParams(x[0], x[1], x[2], x[3], math.exp(x[4]), math.exp(x[5]))
    decay = math.exp(x[3])
    return NssParams(x[0], x[1], x[2], 0.0, decay, decay)


def _bounds(config: NssConfig) -> tuple[np.ndarray, np.ndarray]:
    log_low, log_high = (math.log(v) for v in config.lambda_bounds)
    beta_count = 4 if config.svensson else 3
    decay_count = 2 if config.svensson else 1
    low = np.array([BETA0_FLOOR + 1e-9] + [-BETA_BOUND] * (beta_count - 1) + [log_low] * decay_count)
    high = np.array([BETA_BOUND] * beta_count + [log_high] * decay_count)
    return low, high


def _decay_starts(config: NssConfig) -> list[tuple[float, float]]:
    starts = list(BASE_DECAY_STARTS[: config.n_starts])
    rng = np.random.default_rng(config.seed)
    log_low, log_high = math.log(0.1), math.log(25.0)
    while len(starts) < config.n_starts:
        first, second = np.exp(rng.uniform(log_low, log_high, size=2))
        starts.append((float(first), float(second)))
    low, high = config.lambda_bounds
    return [(min(max(a, low), high), min(max(b, low), high)) for a, b in starts]


def _warm_betas(maturities: np.ndarray, ytms: np.ndarray, lambda1: float, lambda2: float, svensson: bool) -> np.ndarray:
    x1 = maturities / lambda1
    x2 = maturities / lambda2
    slope1 = _decay_loading(x1)
    columns = [np.ones_like(maturities), slope1, slope1 - np.exp(-x1)]
    if svensson:
        columns.append(_decay_loading(x2) - np.exp(-x2))
    design = np.column_stack(columns)
    betas, *_ = np.linalg.lstsq(design, ytms, rcond=None)
    return betas


def nss_objective(params: NssParams, snapshot: MarketSnapshot) -> float:
    flows = FlowTable.from_bonds(snapshot.bonds)
    weights = price_weights(snapshot.bonds)
    model = flows.model_prices(_yields(params, flows.times))
    return float(np.sum(weights * (flows.prices - model) ** 2))


def fit_nss(snapshot: MarketSnapshot, config: NssConfig | None = None) -> NssParams:
    """Multi-start weighted price-error fit; best objective wins, ties go to the earlier start."""
    config = config or NssConfig()
    required = config.parameter_count
    if len(snapshot.bonds) < required:
        raise FitError(f"≥ {required} bonds required, got {len(snapshot.bonds)}")

    flows = FlowTable.from_bonds(snapshot.bonds)
    weights = price_weights(snapshot.bonds)
    root_weights = np.sqrt(weights)
    ytms = ytm_array(snapshot.bonds)
    low, high = _bounds(config)

    def residuals(x: np.ndarray) -> np.ndarray:
        params = _params_from_vector(x, config.svensson)
        model = flows.model_prices(_yields(params, flows.times))
        return root_weights * (flows.prices - model)

    def objective(x: np.ndarray) -> float:
        value = float(np.sum(residuals(x) ** 2))
        return value if math.isfinite(value) else 1e10

    best_x: np.ndarray | None = None
    best_objective = math.inf
    for index, (lambda1, lambda2) in enumerate(_decay_starts(config)):
        betas = _warm_betas(flows.maturities, ytms, lambda1, lambda2, config.svensson)
        decays = [math.log(lambda1), math.log(lambda2)] if config.svensson else [math.log(lambda1)]
        x0 = np.clip(np.concatenate([betas, decays]), low, high)

        simplex = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(low, high)),
            options={"maxiter": config.max_iter, "xatol": 1e-10, "fatol": 1e-20, "adaptive": True},
        )
        interior = np.clip(simplex.x, low + 1e-12, high - 1e-12)
        polish = least_squares(
            residuals,
            interior,
            bounds=(low, high),
            method="trf",
            x_scale="jac",
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
            max_nfev=config.max_iter,
        )
        candidate = polish.x if objective(polish.x) <= simplex.fun else simplex.x
        value = objective(candidate)
        converged = bool(simplex.success or polish.success) and value < 1e10
        logger.debug(
            "nss start finished",
            extra={"start": index, "objective": value, "converged": converged},
        )
        if not converged:
            continue
        if value < best_objective:
            best_objective = value
            best_x = candidate

    if best_x is None:
        raise FitError(f"all {config.n_starts} NSS starts failed to converge within {config.max_iter} iterations")
    params = _params_from_vector(best_x, config.svensson)
    logger.info("nss fit finished", extra={"objective": best_objective, "svensson": config.svensson})
    return params
