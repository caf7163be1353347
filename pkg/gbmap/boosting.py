"""Stage-wise fitting of GBMAP ensembles

Stage j solves the stage problem twice, once per sign b in {-1, +1}, from a
zero-contribution starting point, and installs the better branch. A stage
never increases the training loss: if neither branch improves on the previous
loss, it is retried with fresh random starts and finally replaced by the
zero learner.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gbmap.config import (
    DEFAULT_BETA,
    DEFAULT_LAMBDA,
    DEFAULT_M,
    DEFAULT_SEED,
    INIT_SCALE,
    MONOTONE_TOLERANCE,
    RETRIES_PER_STAGE,
)
from gbmap.data import Dataset, PreprocessStats
from gbmap.ensemble import GbmapModel, InitialModel, ZeroInitialModel
from gbmap.errors import InvalidArgumentError
from gbmap.models import LossKind, Nonlinearity, TaskKind, WeakLearner
from gbmap.objective import (
    StageContext,
    activation,
    empirical_loss,
    pack,
    stage_predictions,
    stage_value_and_gradient,
    unpack,
)
from gbmap.optimizer import OptimizerConfig, minimize

logger = logging.getLogger(__name__)

SIGNS = (-1, 1)


class FitConfig(BaseModel):
    """Boosting hyperparameters"""

    model_config = ConfigDict(frozen=True)

    m: int = Field(DEFAULT_M, ge=1, description="Number of boosting stages")
    beta: float = Field(DEFAULT_BETA, gt=0, description="Softplus sharpness")
    ridge: float = Field(DEFAULT_LAMBDA, ge=0, description="Ridge weight lambda")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    seed: int = Field(DEFAULT_SEED, ge=0)
    task: TaskKind = TaskKind.REGRESSION
    init_scale: float = Field(INIT_SCALE, ge=0)
    retries_per_stage: int = Field(RETRIES_PER_STAGE, ge=0)
    nonlinearity: Nonlinearity = Nonlinearity.SOFTPLUS

    @property
    def loss(self) -> LossKind:
        return LossKind.for_task(self.task)


def zero_intercept(sign: int, config: FitConfig) -> float:
    """a = -b * g(0), which makes a stage with w = 0 contribute nothing"""
    return -sign * float(activation(np.zeros(1), config.beta, config.nonlinearity)[0])


def stage_initial_point(
    p: int, sign: int, rng: np.random.Generator, config: FitConfig
) -> tuple[float, np.ndarray]:
    """Zero-contribution intercept and a small uniform random projection"""
    if p < 1:
        raise InvalidArgumentError("p must be at least 1")
    w = rng.uniform(-config.init_scale, config.init_scale, size=p)
    return zero_intercept(sign, config), w


def zero_learner(p: int, config: FitConfig, sign: int = 1) -> WeakLearner:
    """Stage that contributes exactly 0 everywhere"""
    return WeakLearner(a=zero_intercept(sign, config), b=sign, w=(0.0,) * p)


def _validate(data: Dataset, config: FitConfig) -> None:
    if data.n < 2:
        raise InvalidArgumentError(f"fitting needs at least 2 rows, got {data.n}")
    if data.categorical:
        raise InvalidArgumentError("categorical columns must be one-hot encoded before fitting")
    if not (np.all(np.isfinite(data.x)) and np.all(np.isfinite(data.y))):
        raise InvalidArgumentError("data contains NaN or infinite values")
    if config.task is TaskKind.CLASSIFICATION and not np.all(np.isin(data.y, (-1.0, 1.0))):
        raise InvalidArgumentError("classification targets must be -1 or +1")


def _solve_branch(
    x: np.ndarray,
    y: np.ndarray,
    accumulated: np.ndarray,
    sign: int,
    rng: np.random.Generator,
    config: FitConfig,
) -> tuple[float, float, WeakLearner, np.ndarray]:
    ctx = StageContext(
        rows=x,
        targets=y,
        accumulated=accumulated,
        beta=config.beta,
        ridge=config.ridge,
        sign=sign,
        nonlinearity=config.nonlinearity,
    )
    a0, w0 = stage_initial_point(x.shape[1], sign, rng, config)
    result = minimize(
        lambda theta: stage_value_and_gradient(theta, ctx, config.loss),
        pack(a0, w0),
        config.optimizer,
    )
    predictions = stage_predictions(result.solution, ctx)
    a, w = unpack(result.solution, x.shape[1])
    learner = WeakLearner(a=a, b=sign, w=tuple(w.tolist()))
    loss = empirical_loss(config.loss, y, predictions)
    return result.objective_value, loss, learner, predictions


def fit(
    data: Dataset,
    config: FitConfig = FitConfig(),
    f0: Optional[InitialModel] = None,
    preprocessing: Optional[PreprocessStats] = None,
) -> GbmapModel:
    """Fit a GBMAP ensemble stage by stage.

    Args:
        data: Preprocessed training data (intercept column included)
        config: Hyperparameters; config.task selects the loss
        f0: Initial model, zero by default
        preprocessing: Statistics to store with the model for later inference

    Returns:
        GbmapModel with exactly config.m learners

    Raises:
        InvalidArgumentError: If n < 2, the data has NaNs, or classification
            targets are not +-1
    """
    _validate(data, config)
    f0 = f0 if f0 is not None else ZeroInitialModel()
    x, y = data.x, data.y
    rng = np.random.default_rng(config.seed)

    accumulated = f0.predict(x)
    previous = empirical_loss(config.loss, y, accumulated)
    history = [previous]
    learners = []

    logger.info(
        "Starting fit",
        extra={"n": data.n, "p": data.p, "m": config.m, "task": config.task.value, "loss": previous},
    )
    for stage in range(1, config.m + 1):
        chosen = None
        for attempt in range(config.retries_per_stage + 1):
            branches = [_solve_branch(x, y, accumulated, s, rng, config) for s in SIGNS]
            admissible = [b for b in branches if b[1] <= previous + MONOTONE_TOLERANCE]
            if admissible:
                # ties go to b = +1, the later branch
                chosen = min(reversed(admissible), key=lambda b: b[0])
                break
            logger.warning(
                "Stage increased the training loss, retrying",
                extra={"stage": stage, "attempt": attempt + 1},
            )

        if chosen is None:
            logger.warning("Installing zero learner", extra={"stage": stage})
            learner = zero_learner(data.p, config)
        else:
            _, previous, learner, accumulated = chosen

        learners.append(learner)
        history.append(previous)
        logger.info("Stage fitted", extra={"stage": stage, "sign": learner.b, "loss": previous})

    model = GbmapModel(
        learners=tuple(learners),
        beta=config.beta,
        task=config.task,
        p=data.p,
        f0=f0,
        nonlinearity=config.nonlinearity,
        preprocessing=preprocessing,
        loss_history=tuple(history),
    )
    logger.info("Fit complete", extra={"m": model.m, "loss": previous})
    return model
