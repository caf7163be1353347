"""Pydantic models shared across gbmap"""

import math
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class TaskKind(str, Enum):
    """Supervised task enumeration"""

    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class LossKind(str, Enum):
    """Pointwise loss enumeration"""

    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"

    @classmethod
    def for_task(cls, task: TaskKind) -> "LossKind":
        """Quadratic loss for regression, logistic loss for classification"""
        return cls.QUADRATIC if TaskKind(task) is TaskKind.REGRESSION else cls.LOGISTIC


class Nonlinearity(str, Enum):
    """Weak-learner nonlinearity g"""

    SOFTPLUS = "softplus"
    # g(z) = z; reduces stage 1 to (ridge) OLS / logistic regression
    IDENTITY = "identity"


class WeakLearner(BaseModel):
    """One boosting stage f_j(x) = a + b * g(w^T x)"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    a: float = Field(..., description="Stage intercept")
    b: Literal[-1, 1] = Field(..., description="Stage sign")
    w: tuple[float, ...] = Field(..., min_length=1, description="Projection vector")


class RocPoint(BaseModel):
    """One point of a ROC curve"""

    fpr: float
    tpr: float


class DriftReport(BaseModel):
    """Drift indicators, ground-truth losses and their ROC evaluation"""

    model_config = ConfigDict(frozen=True)

    drifter: str = Field(..., description="Indicator name, e.g. gbmap or euclid")
    indicators: list[float]
    losses: list[float]
    labels: list[bool]
    threshold: float = Field(..., description="Loss quantile on the in-distribution set")
    quantile: float
    roc: list[RocPoint]
    auc: Optional[float] = Field(None, description="None when labels are degenerate")
    auc_undefined: bool = False
    best_f1_threshold: Optional[float] = Field(
        None, description="Indicator threshold with maximal F1 (reported only)"
    )
    dropped_feature: Optional[str] = Field(None, description="Feature the drift split sorted by")
    drift_magnitude: Optional[float] = None
    feature_magnitudes: dict[str, float] = Field(default_factory=dict)

    @field_validator("auc")
    @classmethod
    def _auc_in_unit_interval(cls, value):
        if value is not None and not (0.0 <= value <= 1.0 and math.isfinite(value)):
            raise ValueError("auc must lie in [0, 1]")
        return value


class FoldResult(BaseModel):
    """Score of one cross-validation fold"""

    fold: int
    n_train: int
    n_test: int
    score: float


class CVResult(BaseModel):
    """Cross-validation outcome"""

    metric: str
    folds: list[FoldResult]
    mean_score: float


class BenchmarkRow(BaseModel):
    """Held-out metrics of one train/test repeat"""

    repeat: int
    metric: str
    gbmap: float
    linear: float
    knn: float
    knn_gbmap: float
    embedding_linear: float
