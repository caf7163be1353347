"""Loss functions, the softplus nonlinearity and the stage objective

The stage objective is the regularised empirical loss of the ensemble after
adding one weak learner a + b * g(w^T x) to the accumulated predictions:

    n^-1 sum_i l(y_i, acc_i + a + b * g(w^T x_i)) + lambda * sum_k w_k^2 / p

Stage parameters are packed into one vector theta = [a, w_1, ..., w_p] so the
optimizer can treat them as a flat point.
"""

from typing import Literal, Union

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from gbmap.errors import InvalidArgumentError
from gbmap.models import LossKind, Nonlinearity

Scalar = Union[float, np.ndarray]


def _check_beta(beta: float) -> None:
    if not (np.isfinite(beta) and beta > 0):
        raise InvalidArgumentError(f"beta must be finite and positive, got {beta}")


def _as_finite(z: ArrayLike, name: str = "z") -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError(f"{name} must be finite")
    return z


def _scalar_or_array(value: np.ndarray) -> Scalar:
    return float(value) if value.ndim == 0 else value


def softplus(z: ArrayLike, beta: float) -> Scalar:
    """Softplus g(z) = log(1 + exp(beta z)) / beta, overflow-free.

    Args:
        z: Point(s) to evaluate
        beta: Sharpness; the ReLU max(0, z) is the beta -> inf limit

    Returns:
        A float for scalar input, an array otherwise

    Raises:
        InvalidArgumentError: If z is not finite or beta <= 0
    """
    _check_beta(beta)
    z = _as_finite(z)
    return _scalar_or_array(np.logaddexp(0.0, beta * z) / beta)


def softplus_derivative(z: ArrayLike, beta: float) -> Scalar:
    """Exact derivative of softplus, the sigmoid of beta z."""
    _check_beta(beta)
    z = _as_finite(z)
    return _scalar_or_array(expit(beta * z))


def activation(z: np.ndarray, beta: float, nonlinearity: Nonlinearity) -> np.ndarray:
    """Unchecked g(z) for the hot paths of fitting and inference"""
    if nonlinearity is Nonlinearity.IDENTITY:
        return z
    return np.logaddexp(0.0, beta * z) / beta


def activation_derivative(
    z: np.ndarray, beta: float, nonlinearity: Nonlinearity
) -> np.ndarray:
    """Unchecked g'(z)"""
    if nonlinearity is Nonlinearity.IDENTITY:
        return np.ones_like(z)
    return expit(beta * z)


def _check_labels(y: np.ndarray) -> None:
    if not np.all((y == 1.0) | (y == -1.0)):
        raise InvalidArgumentError("logistic loss requires targets in {-1, +1}")


def _pointwise(kind: LossKind, y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    if kind is LossKind.QUADRATIC:
        return (y - yhat) ** 2
    return np.logaddexp(0.0, -y * yhat)


def pointwise_loss(kind: LossKind, y: ArrayLike, yhat: ArrayLike) -> Scalar:
    """Quadratic loss (y - yhat)^2 or logistic loss log(1 + exp(-y yhat)).

    Raises:
        InvalidArgumentError: For logistic loss with y outside {-1, +1}
    """
    kind = LossKind(kind)
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if kind is LossKind.LOGISTIC:
        _check_labels(y)
    return _scalar_or_array(_pointwise(kind, y, yhat))


def empirical_loss(kind: LossKind, y: np.ndarray, yhat: np.ndarray) -> float:
    """Mean pointwise loss, without regularisation"""
    return float(np.mean(_pointwise(LossKind(kind), y, yhat)))


def loss_gradient(kind: LossKind, y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """Derivative of the pointwise loss with respect to yhat"""
    if kind is LossKind.QUADRATIC:
        return 2.0 * (yhat - y)
    return -y * expit(-y * yhat)


class StageContext(BaseModel):
    """Fixed data of one stage problem: rows, targets, accumulated f_0 + ... + f_{j-1}"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: np.ndarray = Field(..., description="n x p covariates, intercept column included")
    targets: np.ndarray
    accumulated: np.ndarray
    beta: float = Field(..., gt=0)
    ridge: float = Field(..., ge=0, description="Ridge weight lambda")
    sign: Literal[-1, 1]
    nonlinearity: Nonlinearity = Nonlinearity.SOFTPLUS

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.rows.ndim != 2 or self.rows.shape[0] < 1 or self.rows.shape[1] < 1:
            raise ValueError("rows must be a non-empty n x p matrix")
        n = self.rows.shape[0]
        if self.targets.shape != (n,) or self.accumulated.shape != (n,):
            raise ValueError("targets and accumulated must have one entry per row")
        return self

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


def unpack(theta: ArrayLike, p: int) -> tuple[float, np.ndarray]:
    """Split theta = [a, w] and check its width against p"""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p + 1,):
        raise InvalidArgumentError(
            f"stage parameters must have length {p + 1}, got shape {theta.shape}"
        )
    return float(theta[0]), theta[1:]


def pack(a: float, w: ArrayLike) -> np.ndarray:
    return np.concatenate(([float(a)], np.asarray(w, dtype=float)))


def stage_predictions(theta: ArrayLike, ctx: StageContext) -> np.ndarray:
    """acc_i + a + b * g(w^T x_i) for every row"""
    a, w = unpack(theta, ctx.p)
    z = ctx.rows @ w
    return ctx.accumulated + a + ctx.sign * activation(z, ctx.beta, ctx.nonlinearity)


def stage_value_and_gradient(
    theta: ArrayLike, ctx: StageContext, kind: LossKind
) -> tuple[float, np.ndarray]:
    """Stage objective and its analytic gradient in one pass.

    Returns:
        (value, packed gradient [da, dw_1, ..., dw_p])
    """
    kind = LossKind(kind)
    a, w = unpack(theta, ctx.p)
    z = ctx.rows @ w
    pred = ctx.accumulated + a + ctx.sign * activation(z, ctx.beta, ctx.nonlinearity)

    penalty = ctx.ridge * float(w @ w) / ctx.p
    value = empirical_loss(kind, ctx.targets, pred) + penalty

    dpred = loss_gradient(kind, ctx.targets, pred) / ctx.n
    da = float(dpred.sum())
    inner = dpred * ctx.sign * activation_derivative(z, ctx.beta, ctx.nonlinearity)
    dw = ctx.rows.T @ inner + 2.0 * ctx.ridge * w / ctx.p
    return value, pack(da, dw)


def stage_objective(theta: ArrayLike, ctx: StageContext, kind: LossKind) -> float:
    """Regularised empirical loss of the stage with parameters theta"""
    kind = LossKind(kind)
    a, w = unpack(theta, ctx.p)
    pred = stage_predictions(theta, ctx)
    return empirical_loss(kind, ctx.targets, pred) + ctx.ridge * float(w @ w) / ctx.p


def stage_gradient(theta: ArrayLike, ctx: StageContext, kind: LossKind) -> np.ndarray:
    """Analytic gradient of stage_objective, packed as [da, dw]"""
    return stage_value_and_gradient(theta, ctx, kind)[1]
