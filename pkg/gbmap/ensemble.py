"""Fitted GBMAP ensembles and inference over them

f(x) = f_0(x) + sum_j (a_j + b_j * g(w_j^T x)); the embedding of x is the
vector of stage outputs (f_1(x), ..., f_m(x)). f_0 enters predictions, path
distances and gradients but not the embedding.
"""

from typing import Any, Callable, Literal, Optional, Union

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy.special import expit, logit

from gbmap.config import PATH_GRID
from gbmap.data import PreprocessStats
from gbmap.errors import InvalidArgumentError, InvalidStateError
from gbmap.models import Nonlinearity, TaskKind, WeakLearner
from gbmap.objective import activation, activation_derivative

_PROBA_CLIP = 1e-12


class ZeroInitialModel(BaseModel):
    """f_0(x) = 0"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["zero"] = "zero"

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(x.shape[0])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


class LinearInitialModel(BaseModel):
    """f_0(x) = coef^T x + intercept, on preprocessed covariates"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: Literal["linear"] = "linear"
    coef: tuple[float, ...]
    intercept: float = 0.0

    def predict(self, x: np.ndarray) -> np.ndarray:
        return x @ np.asarray(self.coef) + self.intercept

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.coef), x.shape).copy()


class ExternalInitialModel:
    """f_0 backed by any pre-trained predictor.

    Boosting then models the residuals of that predictor. A probabilistic
    classifier's P(y=+1 | x) is mapped to the response scale with the logit.
    The predictor is treated as non-differentiable (zero gradient) and cannot
    be saved to a model file.

    Args:
        predict_fn: Maps an n x p matrix to n outputs
        probabilistic: Outputs are probabilities to pass through the logit
        name: Label recorded in saved provenance
    """

    kind = "external"

    def __init__(
        self,
        predict_fn: Callable[[np.ndarray], ArrayLike],
        probabilistic: bool = False,
        name: str = "external",
    ):
        self.predict_fn = predict_fn
        self.probabilistic = probabilistic
        self.name = name

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.predict_fn(x), dtype=float).reshape(-1)
        if out.shape != (x.shape[0],):
            raise InvalidArgumentError("initial model must return one value per row")
        if self.probabilistic:
            out = logit(np.clip(out, _PROBA_CLIP, 1.0 - _PROBA_CLIP))
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


InitialModel = Union[ZeroInitialModel, LinearInitialModel, ExternalInitialModel]


class GbmapModel(BaseModel):
    """An immutable fitted ensemble.

    Inference methods take a single point (1-D, returns a scalar or vector)
    or a batch of rows (2-D, returns an array with one entry per row).
    Inputs are preprocessed covariates including the intercept column.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    learners: tuple[WeakLearner, ...]
    beta: float = Field(..., gt=0)
    task: TaskKind
    p: int = Field(..., ge=1, description="Covariate dimension, intercept included")
    f0: Any = Field(default_factory=ZeroInitialModel)
    nonlinearity: Nonlinearity = Nonlinearity.SOFTPLUS
    preprocessing: Optional[PreprocessStats] = None
    loss_history: tuple[float, ...] = Field(
        (), description="Training loss after f_0 and after each stage"
    )

    _a: np.ndarray = PrivateAttr()
    _b: np.ndarray = PrivateAttr()
    _w: np.ndarray = PrivateAttr()

    def model_post_init(self, __context) -> None:
        for learner in self.learners:
            if len(learner.w) != self.p:
                raise InvalidArgumentError(
                    f"learner dimension {len(learner.w)} does not match p={self.p}"
                )
        self._a = np.array([l.a for l in self.learners], dtype=float)
        self._b = np.array([l.b for l in self.learners], dtype=float)
        self._w = (
            np.array([l.w for l in self.learners], dtype=float)
            if self.learners
            else np.zeros((0, self.p))
        )

    @property
    def m(self) -> int:
        return len(self.learners)

    @property
    def feature_names(self) -> list[str]:
        if self.preprocessing is not None:
            return self.preprocessing.output_names
        return [f"x{j + 1}" for j in range(self.p)]

    def _rows(self, x: ArrayLike) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.ndim != 2 or rows.shape[1] != self.p:
            raise InvalidArgumentError(
                f"expected points of dimension {self.p}, got shape {x.shape}"
            )
        return rows, single

    def _projections(self, rows: np.ndarray) -> np.ndarray:
        return rows @ self._w.T

    def _stage_outputs(self, rows: np.ndarray) -> np.ndarray:
        g = activation(self._projections(rows), self.beta, self.nonlinearity)
        return self._a + self._b * g

    def _predict_rows(self, rows: np.ndarray) -> np.ndarray:
        return self.f0.predict(rows) + self._stage_outputs(rows).sum(axis=1)

    def _gradient_rows(self, rows: np.ndarray) -> np.ndarray:
        slopes = activation_derivative(self._projections(rows), self.beta, self.nonlinearity)
        return self.f0.gradient(rows) + (slopes * self._b) @ self._w

    def predict(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """f(x) = f_0(x) + sum_j f_j(x)"""
        rows, single = self._rows(x)
        out = self._predict_rows(rows)
        return float(out[0]) if single else out

    def _require_classifier(self) -> None:
        if self.task is not TaskKind.CLASSIFICATION:
            raise InvalidStateError("class predictions need a classification model")

    def predict_class(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """sign(f(x)) with sign(0) = +1"""
        self._require_classifier()
        rows, single = self._rows(x)
        out = np.where(self._predict_rows(rows) >= 0.0, 1.0, -1.0)
        return float(out[0]) if single else out

    def predict_proba(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """P(y = +1 | x) = sigmoid(f(x))"""
        self._require_classifier()
        rows, single = self._rows(x)
        out = expit(self._predict_rows(rows))
        return float(out[0]) if single else out

    def embed(self, x: ArrayLike) -> np.ndarray:
        """Stage outputs (f_1(x), ..., f_m(x)); an n x m matrix for a batch"""
        rows, single = self._rows(x)
        out = self._stage_outputs(rows)
        return out[0] if single else out

    def embedding_distance(self, x: ArrayLike, x_other: ArrayLike) -> Union[float, np.ndarray]:
        """Manhattan distance between embeddings, sum_j |f_j(x) - f_j(x')|"""
        rows, single = self._rows(x)
        other, other_single = self._rows(x_other)
        if rows.shape != other.shape:
            raise InvalidArgumentError("distance operands must have matching shapes")
        out = np.abs(self._stage_outputs(rows) - self._stage_outputs(other)).sum(axis=1)
        return float(out[0]) if single and other_single else out

    def path_distance(self, x: ArrayLike, x_other: ArrayLike, grid: int = PATH_GRID) -> float:
        """Total absolute change of f along the segment from x to x'.

        Midpoint rule over `grid` cells applied to the exact directional
        derivative grad f . (x' - x).
        An external f_0 has no gradient; its total variation over the grid
        nodes is added instead.
        """
        if grid < 2:
            raise InvalidArgumentError("grid must be at least 2")
        start, _ = self._rows(x)
        end, _ = self._rows(x_other)
        if start.shape[0] != 1 or end.shape[0] != 1:
            raise InvalidArgumentError("path_distance takes two single points")
        delta = (end - start)[0]
        t = (np.arange(grid) + 0.5) / grid
        points = start + t[:, None] * delta
        slopes = self._gradient_rows(points) @ delta
        total = np.abs(slopes).sum() / grid
        if isinstance(self.f0, ExternalInitialModel):
            nodes = start + (np.arange(grid + 1) / grid)[:, None] * delta
            total += np.abs(np.diff(self.f0.predict(nodes))).sum()
        return float(total)

    def local_coefficients(self, x: ArrayLike) -> np.ndarray:
        """Gradient of f at x, read as a local linear model"""
        rows, single = self._rows(x)
        out = self._gradient_rows(rows)
        return out[0] if single else out

    def activations(self, x: ArrayLike) -> np.ndarray:
        """Whether each stage's half-space w_j^T x > 0 is active"""
        rows, single = self._rows(x)
        out = self._projections(rows) > 0.0
        return out[0] if single else out
