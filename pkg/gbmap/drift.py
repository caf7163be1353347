"""Concept-drift splits, drift indicators and their ROC evaluation

A drift split sorts the data by one feature, trains on a random half of the
low half (a1) and compares the loss on the other low half (a2) with the loss
on the high half (b). The feature is removed from all three parts so the
shift is hidden from the model. Indicators are then scored by how well they
rank the points whose ground-truth loss exceeds the in-distribution quantile.
"""

import logging
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gbmap.boosting import FitConfig, fit
from gbmap.config import DEFAULT_SEED, DRIFT_K, DRIFT_QUANTILE
from gbmap.data import Dataset
from gbmap.ensemble import GbmapModel
from gbmap.errors import InvalidArgumentError, InvalidStateError
from gbmap.evaluation import fit_linear_baseline
from gbmap.models import DriftReport, LossKind, RocPoint, TaskKind
from gbmap.neighbors import EmbeddingMetric, EuclideanMetric, NeighborIndex
from gbmap.objective import pointwise_loss

logger = logging.getLogger(__name__)

MIN_ROWS = 8


class DriftSplit(BaseModel):
    """Training part a1, in-distribution test a2 and shifted test b"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a1: Dataset
    a2: Dataset
    b: Dataset
    dropped_feature: str
    drift_magnitude: float = Field(..., description="Mean loss on b minus mean loss on a2")
    model: GbmapModel = Field(..., description="GBMAP fitted on a1")
    source: Dataset = Field(..., description="Complete data, dropped feature included")
    a1_rows: np.ndarray
    a2_rows: np.ndarray
    b_rows: np.ndarray
    feature_magnitudes: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_parts(self):
        rows = np.concatenate([self.a1_rows, self.a2_rows, self.b_rows])
        if np.unique(rows).size != rows.size:
            raise ValueError("a1, a2 and b must be disjoint")
        if abs(self.a1_rows.size - self.a2_rows.size) > 1:
            raise ValueError("a1 and a2 sizes must differ by at most one row")
        for part in (self.a1, self.a2, self.b):
            if self.dropped_feature in part.feature_names:
                raise ValueError("dropped feature must be absent from every part")
        return self


class DriftExperiment(BaseModel):
    """A drift split with the reports of both drifters"""

    split: DriftSplit
    gbmap: DriftReport
    euclid: DriftReport


def _mean_loss(model: GbmapModel, data: Dataset) -> float:
    kind = LossKind.for_task(model.task)
    return float(np.mean(pointwise_loss(kind, data.y, model.predict(data.x))))


def _halves(data: Dataset, column: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.lexsort((np.arange(data.n), data.x[:, column]))
    low, high = order[: data.n // 2], order[data.n // 2 :]
    low = np.random.default_rng(seed).permutation(low)
    cut = (low.size + 1) // 2
    return low[:cut], low[cut:], high


def make_drift_split(
    data: Dataset,
    config: FitConfig = FitConfig(),
    seed: int = DEFAULT_SEED,
    feature: Optional[str] = None,
) -> DriftSplit:
    """Pick the feature whose split induces the largest drift.

    For every covariate the rows are sorted by it and halved into a (low)
    and b (high); a is halved at random into a1 and a2, the covariate is
    dropped, a GBMAP is fitted on a1 and the drift magnitude is the mean loss
    on b minus the mean loss on a2.

    Args:
        data: Preprocessed data with an intercept column
        config: Fit configuration for the per-feature models
        seed: Seed of the a1/a2 halving
        feature: Split along this covariate only instead of searching all

    Returns:
        DriftSplit for the feature with the largest magnitude (first on ties)

    Raises:
        InvalidArgumentError: If there are fewer than 8 rows or 2 covariates,
            or feature is not a covariate
    """
    names = data.covariate_names
    if data.n < MIN_ROWS:
        raise InvalidArgumentError(f"drift split needs at least {MIN_ROWS} rows, got {data.n}")
    if len(names) < 2:
        raise InvalidArgumentError("drift split needs at least 2 covariates")
    if feature is not None and feature not in names:
        raise InvalidArgumentError(f"drift feature not found: {feature!r}")

    config = config.model_copy(update={"task": data.task})
    best: Optional[DriftSplit] = None
    magnitudes: dict[str, float] = {}
    for column, name in enumerate(names):
        if feature is not None and name != feature:
            continue
        a1_rows, a2_rows, b_rows = _halves(data, column, seed)
        reduced = data.drop_feature(name)
        a1, a2, b = reduced.subset(a1_rows), reduced.subset(a2_rows), reduced.subset(b_rows)
        model = fit(a1, config)
        magnitude = _mean_loss(model, b) - _mean_loss(model, a2)
        magnitudes[name] = magnitude
        logger.info("Drift candidate scored", extra={"feature": name, "magnitude": magnitude})

        if best is None or magnitude > best.drift_magnitude:
            best = DriftSplit(
                a1=a1,
                a2=a2,
                b=b,
                dropped_feature=name,
                drift_magnitude=magnitude,
                model=model,
                source=data,
                a1_rows=a1_rows,
                a2_rows=a2_rows,
                b_rows=b_rows,
            )

    best = best.model_copy(update={"feature_magnitudes": magnitudes})
    logger.info(
        "Drift split chosen",
        extra={"feature": best.dropped_feature, "magnitude": best.drift_magnitude},
    )
    if best.drift_magnitude <= 0:
        logger.warning(
            "Drift split induces no drift", extra={"magnitude": best.drift_magnitude}
        )
    return best


def _reference_scores(model: GbmapModel, train: Dataset) -> np.ndarray:
    if model.task is TaskKind.CLASSIFICATION:
        return model.predict(train.x)
    return train.y


def gbmap_indicators(
    model: GbmapModel, train: Dataset, x: ArrayLike, k: int = DRIFT_K
) -> np.ndarray:
    """|f(x*) - f_kNN(x*)| for a batch of points, neighbours found in embedding space.

    f_kNN averages training targets for regression and model scores f(x_i)
    for classification.
    """
    index = NeighborIndex(train, EmbeddingMetric(model))
    rows = np.atleast_2d(np.asarray(x, dtype=float))
    neighbours, _ = index.query(rows, k)
    local = _reference_scores(model, train)[neighbours].mean(axis=1)
    return np.abs(model.predict(rows) - local)


def gbmap_indicator(model: GbmapModel, train: Dataset, x: ArrayLike, k: int = DRIFT_K) -> float:
    """GBMAP drifter for one point"""
    return float(gbmap_indicators(model, train, np.asarray(x, dtype=float)[None, :], k)[0])


def euclid_indicators(train: Dataset, x: ArrayLike, k: int = DRIFT_K) -> np.ndarray:
    """Euclidean distance to the k-th nearest training row, for a batch of points"""
    rows = np.atleast_2d(np.asarray(x, dtype=float))
    _, distances = NeighborIndex(train, EuclideanMetric()).query(rows, k)
    return distances[:, -1]


def euclid_indicator(train: Dataset, x: ArrayLike, k: int = DRIFT_K) -> float:
    """Euclidean drifter for one point"""
    return float(euclid_indicators(train, np.asarray(x, dtype=float)[None, :], k)[0])


def fit_score_model(data: Dataset, ridge: float = 0.0) -> GbmapModel:
    """Logistic-regression score s(x) = w^T x fitted on the complete data"""
    if data.task is not TaskKind.CLASSIFICATION:
        raise InvalidArgumentError("score model needs classification data")
    return fit_linear_baseline(data, TaskKind.CLASSIFICATION, ridge=ridge)


def _require_score(score_model: Optional[GbmapModel], score_x: Optional[ArrayLike]) -> None:
    if score_model is None:
        raise InvalidStateError("classification drift labels need a score model")
    # rows in the score model's space, which keeps the dropped feature
    if score_x is None:
        raise InvalidStateError("classification drift labels need score_x")


def ground_truth_losses(
    model: GbmapModel,
    data: Dataset,
    score_model: Optional[GbmapModel] = None,
    score_x: Optional[ArrayLike] = None,
) -> np.ndarray:
    """Squared error of f against the target (regression) or the score s (classification).

    Args:
        model: GBMAP fitted on a1
        data: Points in the model's covariate space
        score_model: Logistic score model, required for classification
        score_x: The same points in the score model's space, required for classification

    Raises:
        InvalidStateError: If a classification model comes without a score model
            or without score_x
    """
    predictions = model.predict(data.x)
    if model.task is TaskKind.REGRESSION:
        return (data.y - predictions) ** 2
    _require_score(score_model, score_x)
    return (score_model.predict(np.asarray(score_x, dtype=float)) - predictions) ** 2


def ground_truth_loss(
    model: GbmapModel,
    x: ArrayLike,
    y: float,
    score_model: Optional[GbmapModel] = None,
    score_x: Optional[ArrayLike] = None,
) -> float:
    """ground_truth_losses for a single point"""
    x = np.asarray(x, dtype=float)
    if model.task is TaskKind.REGRESSION:
        return float((y - model.predict(x)) ** 2)
    _require_score(score_model, score_x)
    s = score_model.predict(np.asarray(score_x, dtype=float))
    return float((s - model.predict(x)) ** 2)


def roc_curve(
    indicators: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC over every distinct indicator value, from the +inf endpoint down.

    A point is flagged when its indicator is >= the threshold. The lowest
    distinct value flags every point and coincides with the -inf endpoint.

    Returns:
        (thresholds, fpr, tpr), thresholds starting with +inf
    """
    positives = int(labels.sum())
    negatives = labels.size - positives
    order = np.argsort(-indicators, kind="stable")
    ranked, hits = indicators[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(ranked) != 0), ranked.size - 1]
    tp = np.cumsum(hits)[last]
    fp = np.cumsum(~hits)[last]
    thresholds = np.r_[np.inf, ranked[last]]
    return thresholds, np.r_[0.0, fp / negatives], np.r_[0.0, tp / positives]


def _best_f1_threshold(indicators: np.ndarray, labels: np.ndarray) -> float:
    order = np.argsort(-indicators, kind="stable")
    ranked, hits = indicators[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(ranked) != 0), ranked.size - 1]
    tp = np.cumsum(hits)[last]
    flagged = last + 1
    f1 = 2.0 * tp / (flagged + labels.sum())
    return float(ranked[last][int(np.argmax(f1))])


def label_and_score(
    indicators: ArrayLike,
    losses: ArrayLike,
    in_distribution_losses: ArrayLike,
    quantile: float = DRIFT_QUANTILE,
    drifter: str = "gbmap",
) -> DriftReport:
    """Label drift by the loss quantile on a2 and score the indicators by ROC AUC.

    Args:
        indicators: Drift indicator of every evaluated point
        losses: Ground-truth loss of every evaluated point
        in_distribution_losses: Ground-truth losses on a2, which set the threshold
        quantile: Quantile of the a2 losses above which a point is drift
        drifter: Name recorded in the report

    Returns:
        DriftReport; auc is None and auc_undefined is set when every label is
        the same
    """
    indicators = np.asarray(indicators, dtype=float)
    losses = np.asarray(losses, dtype=float)
    reference = np.asarray(in_distribution_losses, dtype=float)
    if indicators.shape != losses.shape or indicators.ndim != 1 or indicators.size == 0:
        raise InvalidArgumentError("indicators and losses must be non-empty and equally long")
    if reference.size == 0:
        raise InvalidArgumentError("in-distribution losses must be non-empty")
    if not 0.0 < quantile < 1.0:
        raise InvalidArgumentError(f"quantile must lie in (0, 1), got {quantile}")

    threshold = float(np.quantile(reference, quantile, method="linear"))
    labels = losses > threshold
    report = dict(
        drifter=drifter,
        indicators=indicators.tolist(),
        losses=losses.tolist(),
        labels=labels.tolist(),
        threshold=threshold,
        quantile=quantile,
    )
    if labels.all() or not labels.any():
        logger.warning(
            "AUC undefined for degenerate labels",
            extra={"drifter": drifter, "positives": int(labels.sum())},
        )
        return DriftReport(**report, roc=[], auc=None, auc_undefined=True)

    _, fpr, tpr = roc_curve(indicators, labels)
    auc = float(np.clip(np.trapezoid(tpr, fpr), 0.0, 1.0))
    logger.info("Drift indicators scored", extra={"drifter": drifter, "auc": auc})
    return DriftReport(
        **report,
        roc=[RocPoint(fpr=f, tpr=t) for f, t in zip(fpr.tolist(), tpr.tolist())],
        auc=auc,
        best_f1_threshold=_best_f1_threshold(indicators, labels),
    )


def run_drift_experiment(
    data: Dataset,
    config: FitConfig = FitConfig(),
    k: int = DRIFT_K,
    quantile: float = DRIFT_QUANTILE,
    seed: int = DEFAULT_SEED,
    feature: Optional[str] = None,
) -> DriftExperiment:
    """Drift split, both drifters and their ROC evaluation on a2 followed by b.

    Args:
        data: Preprocessed data with an intercept column
        config: Fit configuration for the split search
        k: Neighbours used by both drifters
        quantile: Loss quantile on a2 that defines drift
        seed: Seed of the a1/a2 halving
        feature: Force the split along this covariate

    Returns:
        DriftExperiment with the chosen split and one report per drifter
    """
    split = make_drift_split(data, config, seed, feature)
    evaluation = np.concatenate([split.a2.x, split.b.x])
    targets = Dataset(
        x=evaluation,
        y=np.concatenate([split.a2.y, split.b.y]),
        feature_names=split.a2.feature_names,
        task=split.a2.task,
        has_intercept=split.a2.has_intercept,
    )

    score_model, score_x, a2_score_x = None, None, None
    if data.task is TaskKind.CLASSIFICATION:
        score_model = fit_score_model(split.source)
        score_x = split.source.x[np.concatenate([split.a2_rows, split.b_rows])]
        a2_score_x = split.source.x[split.a2_rows]

    losses = ground_truth_losses(split.model, targets, score_model, score_x)
    a2_losses = ground_truth_losses(split.model, split.a2, score_model, a2_score_x)

    context = {
        "dropped_feature": split.dropped_feature,
        "drift_magnitude": split.drift_magnitude,
        "feature_magnitudes": split.feature_magnitudes,
    }
    reports = {}
    for name, indicators in (
        ("gbmap", gbmap_indicators(split.model, split.a1, evaluation, k)),
        ("euclid", euclid_indicators(split.a1, evaluation, k)),
    ):
        report = label_and_score(indicators, losses, a2_losses, quantile, drifter=name)
        reports[name] = report.model_copy(update=context)
    return DriftExperiment(split=split, **reports)
