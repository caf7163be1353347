"""Shared builders for hand-made models and datasets"""

from typing import Optional

import numpy as np

from gbmap.data import INTERCEPT, Dataset
from gbmap.ensemble import GbmapModel
from gbmap.models import TaskKind, WeakLearner


def random_model(
    rng: np.random.Generator,
    p: int,
    m: int,
    beta: float = 5.0,
    task: TaskKind = TaskKind.REGRESSION,
    scale: float = 1.0,
    f0=None,
) -> GbmapModel:
    """Model with random learners, not fitted to anything"""
    learners = tuple(
        WeakLearner(
            a=float(rng.normal()),
            b=int(rng.choice([-1, 1])),
            w=tuple((scale * rng.normal(size=p)).tolist()),
        )
        for _ in range(m)
    )
    kwargs = {} if f0 is None else {"f0": f0}
    return GbmapModel(learners=learners, beta=beta, task=task, p=p, **kwargs)


def make_dataset(
    x: np.ndarray, y: np.ndarray, task: TaskKind = TaskKind.REGRESSION
) -> Dataset:
    """Dataset whose last column is taken to be the intercept"""
    names = tuple(f"x{j + 1}" for j in range(x.shape[1] - 1)) + (INTERCEPT,)
    return Dataset(x=x, y=y, feature_names=names, task=task, has_intercept=True)


def with_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def assert_monotone(model: GbmapModel, tolerance: float = 1e-12) -> None:
    history = np.asarray(model.loss_history)
    assert len(history) == model.m + 1
    assert np.all(np.diff(history) <= tolerance)


def softplus_scalar(z: float, beta: float) -> float:
    """Textbook softplus for moderate arguments"""
    return float(np.log1p(np.exp(beta * z)) / beta)


def insert_zero_weights(model: GbmapModel, extra: int, task: Optional[TaskKind] = None) -> GbmapModel:
    """Lift a model to extra covariates placed before the intercept, with zero weight"""
    learners = tuple(
        WeakLearner(a=l.a, b=l.b, w=tuple(l.w[:-1]) + (0.0,) * extra + (l.w[-1],))
        for l in model.learners
    )
    return GbmapModel(
        learners=learners, beta=model.beta, task=task or model.task, p=model.p + extra
    )
