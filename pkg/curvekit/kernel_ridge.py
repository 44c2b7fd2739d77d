"""Kernel-ridge discount curve.

The discount deviation g(t) = d(t) - 1 lives in the space of functions with
g(0) = 0 and norm  ||g||^2 = int_0^inf a g'(u)^2 + b g''(u)^2 du.  Its reproducing
kernel, with r = sqrt(a/b), m = min(s, t) and M = max(s, t), is

    k(s, t) = ( m - (exp(-r (M - m)) - exp(-r (M + m))) / (2 r) ) / a

which reduces to min(s, t) / a when b = 0.  Prices are linear in the kernel
weights, so the penalized weighted least-squares problem has a closed form.
"""

from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from curvekit.curves import YieldCurve, as_times
from curvekit.errors import InvalidDiscountError, SingularSystemError, ValidationError
from curvekit.market_data import MarketSnapshot
from curvekit.pricing import price_weights


logger = logging.getLogger(__name__)

ANCHOR_TOLERANCE = 1e-9
JITTER_START = 1e-12
JITTER_LIMIT = 1e-6


@dataclass(frozen=True)
class KernelParams:
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if self.a < 0 or self.b < 0 or self.a + self.b <= 0:
            raise ValidationError("kernel weights need a >= 0, b >= 0 and a + b > 0", field="kernel")
        if self.a == 0:
            raise ValidationError("a = 0 does not define a reproducing kernel on this space", field="kernel.a")

    @property
    def decay(self) -> float:
        return math.inf if self.b == 0 else math.sqrt(self.a / self.b)


@dataclass(frozen=True)
class KrConfig:
    lam: float = 1e-2
    kernel: KernelParams = field(default_factory=KernelParams)

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValidationError("lambda must be positive", field="lambda")


def kernel_derivative(u: ArrayLike, s: ArrayLike, params: KernelParams, order: int = 0) -> np.ndarray:
    """Derivative of k(u, s) of the given order in its first argument (orders 0-2)."""
    u = as_times(u)
    s = as_times(s)
    a, r = params.a, params.decay
    if math.isinf(r):
        if order == 0:
            return np.minimum(u, s) / a
        if order == 1:
            return np.where(u < s, 1.0 / a, 0.0) + 0.0 * s
        return np.zeros(np.broadcast(u, s).shape)

    near = np.exp(-r * np.abs(u - s))
    far = np.exp(-r * (u + s))
    if order == 0:
        return (np.minimum(u, s) - (near - far) / (2.0 * r)) / a
    if order == 1:
        return np.where(u <= s, 1.0 - (near + far) / 2.0, (near - far) / 2.0) / a
    if order == 2:
        return -r * (near - far) / (2.0 * a)
    raise ValueError(f"unsupported derivative order {order}")


def kr_kernel(s: ArrayLike, t: ArrayLike, kernel_params: KernelParams) -> np.ndarray | float:
    values = kernel_derivative(s, t, kernel_params, order=0)
    return float(values) if np.ndim(values) == 0 else values


@dataclass(frozen=True)
class KrModel(YieldCurve):
    anchor_times: tuple[float, ...]
    alphas: tuple[float, ...]
    lam: float
    kernel_params: KernelParams = field(default_factory=KernelParams)
    kind = "kr"

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchor_times", tuple(float(x) for x in self.anchor_times))
        object.__setattr__(self, "alphas", tuple(float(x) for x in self.alphas))
        if len(self.anchor_times) != len(self.alphas):
            raise ValidationError("anchor_times and alphas must have equal length", field="alphas")
        if any(t <= 0 for t in self.anchor_times):
            raise ValidationError("anchor times must be positive", field="anchor_times")
        if any(b <= a for a, b in zip(self.anchor_times, self.anchor_times[1:])):
            raise ValidationError("anchor times must be strictly increasing", field="anchor_times")
        if not self.lam > 0:
            raise ValidationError("lambda must be positive", field="lambda")

    def _deviation(self, times: np.ndarray) -> np.ndarray:
        if not self.anchor_times:
            return np.zeros(np.shape(times))
        kernel = kernel_derivative(times[..., None], np.array(self.anchor_times), self.kernel_params)
        return kernel @ np.array(self.alphas)

    def discount_hat(self, t: ArrayLike) -> np.ndarray:
        return 1.0 + self._deviation(as_times(t))

    def _discount_slope(self, times: np.ndarray) -> np.ndarray:
        if not self.anchor_times:
            return np.zeros(np.shape(times))
        slope = kernel_derivative(times[..., None], np.array(self.anchor_times), self.kernel_params, order=1)
        return slope @ np.array(self.alphas)

    def yields(self, t: np.ndarray) -> np.ndarray:
        times = as_times(t)
        deviation = self._deviation(times)
        if np.any(deviation <= -1.0):
            index = int(np.argmax(deviation <= -1.0))
            raise InvalidDiscountError(float(times.flat[index]), 1.0 + float(deviation.flat[index]))
        return -np.log1p(deviation) / times

    def forward(self, t: ArrayLike, h: float = 1e-4) -> np.ndarray:
        times = as_times(t)
        return -self._discount_slope(times) / self.discount_hat(times)

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "anchor_times": list(self.anchor_times),
            "alphas": list(self.alphas),
            "lambda": self.lam,
            "kernel_params": asdict(self.kernel_params),
        }


def kr_yield(model: KrModel, t: ArrayLike) -> float | np.ndarray:
    values = model.yields(as_times(t))
    return float(values) if np.ndim(values) == 0 else values


@dataclass(frozen=True)
class KrProblem:
    """Cashflow matrix, kernel matrix and weights of one snapshot."""

    anchor_times: np.ndarray
    cashflows: np.ndarray
    kernel: np.ndarray
    weights: np.ndarray
    prices: np.ndarray
    lam: float

    def model_prices(self, alphas: np.ndarray) -> np.ndarray:
        return self.cashflows @ (1.0 + self.kernel @ alphas)

    def price_error(self, alphas: np.ndarray) -> float:
        return float(np.sum(self.weights * (self.prices - self.model_prices(alphas)) ** 2))

    def objective(self, alphas: np.ndarray) -> float:
        return self.price_error(alphas) + self.lam * float(alphas @ self.kernel @ alphas)

    def gradient(self, alphas: np.ndarray) -> np.ndarray:
        residual = self.prices - self.model_prices(alphas)
        return -2.0 * self.kernel @ (self.cashflows.T @ (self.weights * residual)) + 2.0 * self.lam * (self.kernel @ alphas)


def anchor_grid(snapshot: MarketSnapshot) -> np.ndarray:
    times = np.sort(np.concatenate([bond.flows()[0] for bond in snapshot.bonds]))
    kept = [times[0]]
    for t in times[1:]:
        if t - kept[-1] > ANCHOR_TOLERANCE:
            kept.append(t)
    return np.array(kept)


def build_kr_problem(snapshot: MarketSnapshot, lam: float, kernel_params: KernelParams) -> KrProblem:
    anchors = anchor_grid(snapshot)
    cashflows = np.zeros((len(snapshot.bonds), len(anchors)))
    for row, bond in enumerate(snapshot.bonds):
        times, amounts = bond.flows()
        columns = np.clip(np.searchsorted(anchors, times - ANCHOR_TOLERANCE), 0, len(anchors) - 1)
        np.add.at(cashflows[row], columns, amounts)
    kernel = kernel_derivative(anchors[:, None], anchors[None, :], kernel_params)
    return KrProblem(
        anchor_times=anchors,
        cashflows=cashflows,
        kernel=kernel,
        weights=price_weights(snapshot.bonds),
        prices=np.array([bond.market_price for bond in snapshot.bonds]),
        lam=lam,
    )


def _solve_symmetric(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    scale = float(np.trace(matrix))
    if not scale > 0:
        scale = 1.0
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(matrix + jitter * np.eye(len(matrix)), lower=True, check_finite=True)
            solution = cho_solve(factor, rhs)
            if np.all(np.isfinite(solution)):
                if jitter:
                    logger.warning("kernel system needed jitter", extra={"jitter": jitter})
                return solution
        except (LinAlgError, ValueError):
            pass
        jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_LIMIT * scale * (1 + 1e-9):
            break
    condition = float(np.linalg.cond(matrix)) if np.all(np.isfinite(matrix)) else math.inf
    raise SingularSystemError("kernel system is singular; increase lambda or merge anchor times", condition_number=condition)


def fit_kr(snapshot: MarketSnapshot, lam: float = 1e-2, kernel_params: KernelParams | None = None) -> KrModel:
    """Closed-form minimizer of sum_j w_j (p_j - p_hat_j)^2 + lam * alpha' K alpha.

    With alpha = C' beta the stationarity condition becomes the M x M system
    (C K C' + lam W^-1) beta = p - C 1.
    """
    kernel_params = kernel_params or KernelParams()
    if not lam > 0:
        raise ValidationError("lambda must be positive", field="lambda")
    problem = build_kr_problem(snapshot, lam, kernel_params)
    c = problem.cashflows
    system = c @ problem.kernel @ c.T + lam * np.diag(1.0 / problem.weights)
    beta = _solve_symmetric(system, problem.prices - c.sum(axis=1))
    alphas = c.T @ beta
    logger.info(
        "kr fit finished",
        extra={"anchors": len(alphas), "lam": lam, "objective": problem.objective(alphas)},
    )
    return KrModel(
        anchor_times=tuple(problem.anchor_times),
        alphas=tuple(alphas),
        lam=lam,
        kernel_params=kernel_params,
    )
