"""Metrics, cross-validation, random search, PCA and benchmark drivers"""

import logging
from itertools import combinations
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gbmap.boosting import FitConfig, fit
from gbmap.config import DEFAULT_SEED, KNN_K
from gbmap.data import (
    INTERCEPT,
    Dataset,
    apply_preprocess,
    fit_preprocess,
    gen_cluster_vis,
    train_test_split,
)
from gbmap.ensemble import GbmapModel
from gbmap.errors import InvalidArgumentError
from gbmap.models import BenchmarkRow, CVResult, FoldResult, Nonlinearity, TaskKind
from gbmap.neighbors import EmbeddingMetric, EuclideanMetric, knn_classify, knn_regress
from gbmap.optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

LINEAR_MAXITER = 1000
_POWER_MAXITER = 20000
_POWER_TOLERANCE = 1e-12


class SearchSpace(BaseModel):
    """Hyperparameter ranges sampled by random_search"""

    model_config = ConfigDict(frozen=True)

    m_min: int = Field(2, ge=1)
    m_max: int = Field(150, ge=1)
    beta_min: float = Field(1.0, gt=0)
    beta_max: float = Field(20.0, gt=0)
    lambda_min: float = Field(0.0, ge=0)
    lambda_max: float = Field(1e-2, ge=0)
    maxiter_choices: tuple[int, ...] = Field((200, 400), min_length=1)
    budget: int = Field(100, ge=1, description="Default number of sampled configurations")

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.m_min > self.m_max or self.beta_min > self.beta_max:
            raise ValueError("range minimum exceeds maximum")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min exceeds lambda_max")
        if any(choice < 1 for choice in self.maxiter_choices):
            raise ValueError("maxiter choices must be positive")
        return self

    @classmethod
    def for_knn(cls) -> "SearchSpace":
        """Narrower space used when tuning embeddings for kNN"""
        return cls(m_max=50, budget=50)

    def sample(self, rng: np.random.Generator, base: FitConfig) -> FitConfig:
        """Draw m, beta, lambda and maxiter uniformly; other settings come from base"""
        m = int(rng.integers(self.m_min, self.m_max + 1))
        beta = float(rng.uniform(self.beta_min, self.beta_max))
        ridge = float(rng.uniform(self.lambda_min, self.lambda_max))
        maxiter = int(self.maxiter_choices[int(rng.integers(len(self.maxiter_choices)))])
        optimizer = base.optimizer.model_copy(update={"max_iterations": maxiter})
        return base.model_copy(
            update={"m": m, "beta": beta, "ridge": ridge, "optimizer": optimizer}
        )


class TrialResult(BaseModel):
    trial: int
    config: FitConfig
    score: float


class SearchResult(BaseModel):
    """Best configuration of a random search with every trial's CV score"""

    best_config: FitConfig
    best_score: float
    trials: list[TrialResult]


def _paired(y: ArrayLike, yhat: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise InvalidArgumentError(f"length mismatch: {y.size} targets, {yhat.size} predictions")
    return y, yhat


def r_squared(y: ArrayLike, yhat: ArrayLike) -> float:
    """1 - SS_res / SS_tot against the mean of y

    Raises:
        InvalidArgumentError: If fewer than 2 targets or y has zero variance
    """
    y, yhat = _paired(y, yhat)
    if y.size < 2:
        raise InvalidArgumentError("R^2 needs at least 2 targets")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise InvalidArgumentError("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def accuracy(y: ArrayLike, yhat: ArrayLike) -> float:
    """Fraction of exact class matches"""
    y, yhat = _paired(y, yhat)
    if y.size == 0:
        raise InvalidArgumentError("accuracy needs at least one target")
    return float(np.mean(y == yhat))


def metric_name(task: TaskKind) -> str:
    return "r2" if TaskKind(task) is TaskKind.REGRESSION else "accuracy"


def score_predictions(task: TaskKind, y: ArrayLike, yhat: ArrayLike) -> float:
    """R^2 for regression, accuracy of sign(yhat) for classification"""
    if TaskKind(task) is TaskKind.REGRESSION:
        return r_squared(y, yhat)
    return accuracy(y, np.where(np.asarray(yhat) >= 0.0, 1.0, -1.0))


def score_model(model: GbmapModel, data: Dataset) -> float:
    return score_predictions(model.task, data.y, model.predict(data.x))


def fit_linear_baseline(
    data: Dataset,
    task: Optional[TaskKind] = None,
    ridge: float = 0.0,
    optimizer: Optional[OptimizerConfig] = None,
) -> GbmapModel:
    """OLS or logistic regression as a one-stage identity-nonlinearity model.

    With g(z) = z the single stage is a + b * w^T x, so minimizing the stage
    objective is (ridge) least squares for the quadratic loss and (ridge)
    logistic regression for the logistic loss.
    """
    config = FitConfig(
        m=1,
        ridge=ridge,
        task=task if task is not None else data.task,
        nonlinearity=Nonlinearity.IDENTITY,
        optimizer=optimizer or OptimizerConfig(max_iterations=LINEAR_MAXITER),
    )
    return fit(data, config)


def fold_partition(n: int, folds: int, seed: int = DEFAULT_SEED) -> list[np.ndarray]:
    """Seeded shuffle of range(n) cut into contiguous folds differing by at most one row"""
    if folds < 2:
        raise InvalidArgumentError(f"folds must be at least 2, got {folds}")
    if n < folds:
        raise InvalidArgumentError(f"cannot split {n} rows into {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, folds)


def kfold_cv(
    data: Dataset, config: FitConfig, folds: int = 5, seed: int = DEFAULT_SEED
) -> CVResult:
    """k-fold cross-validated GBMAP score with preprocessing refit per fold.

    Args:
        data: Raw (unpreprocessed) data; an existing intercept column is rebuilt
        config: Fit configuration shared by every fold
        folds: Number of folds, at least 2
        seed: Shuffle seed

    Returns:
        CVResult with R^2 (regression) or accuracy (classification) per fold
    """
    parts = fold_partition(data.n, folds, seed)
    results = []
    for i, test_rows in enumerate(parts):
        train_rows = np.concatenate([p for j, p in enumerate(parts) if j != i])
        train, test = data.subset(train_rows), data.subset(test_rows)
        stats = fit_preprocess(train)
        model = fit(apply_preprocess(stats, train), config, preprocessing=stats)
        score = score_model(model, apply_preprocess(stats, test))
        results.append(
            FoldResult(fold=i + 1, n_train=train.n, n_test=test.n, score=score)
        )
        logger.info("CV fold scored", extra={"fold": i + 1, "score": score})

    mean = float(np.mean([r.score for r in results]))
    return CVResult(metric=metric_name(config.task), folds=results, mean_score=mean)


def random_search(
    data: Dataset,
    space: SearchSpace = SearchSpace(),
    budget: Optional[int] = None,
    seed: int = DEFAULT_SEED,
    folds: int = 5,
    base: Optional[FitConfig] = None,
) -> SearchResult:
    """Score `budget` configurations sampled from the space by k-fold CV.

    The highest mean CV score wins; ties go to the first sampled configuration.
    """
    budget = space.budget if budget is None else budget
    if budget < 1:
        raise InvalidArgumentError(f"budget must be at least 1, got {budget}")
    base = base or FitConfig(task=data.task, seed=seed)
    rng = np.random.default_rng(seed)

    trials = []
    best: Optional[TrialResult] = None
    for trial in range(1, budget + 1):
        config = space.sample(rng, base)
        score = kfold_cv(data, config, folds=folds, seed=seed).mean_score
        result = TrialResult(trial=trial, config=config, score=score)
        trials.append(result)
        if best is None or score > best.score:
            best = result
        logger.info(
            "Search trial scored",
            extra={
                "trial": trial,
                "m": config.m,
                "beta": config.beta,
                "lambda": config.ridge,
                "maxiter": config.optimizer.max_iterations,
                "score": score,
            },
        )
    return SearchResult(best_config=best.config, best_score=best.score, trials=trials)


def principal_components(
    points: ArrayLike, n_components: int = 2
) -> tuple[np.ndarray, np.ndarray]:
    """Top principal axes of the covariance by power iteration with deflation.

    Each component's largest-magnitude loading is made positive.

    Returns:
        (components, variances): n_components x d axes and their eigenvalues

    Raises:
        InvalidArgumentError: If there are too few points or dimensions, or the
            centred data has rank below n_components
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < n_components:
        raise InvalidArgumentError(
            f"need at least 3 points of dimension >= {n_components}, got shape {x.shape}"
        )
    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / x.shape[0]
    scale = float(np.trace(cov))
    rng = np.random.default_rng(0)

    components, variances = [], []
    for k in range(n_components):
        v = rng.standard_normal(cov.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(_POWER_MAXITER):
            w = cov @ v
            norm = float(np.linalg.norm(w))
            if norm <= 1e-12 * max(scale, 1e-300):
                break
            w /= norm
            if np.linalg.norm(w - v) < _POWER_TOLERANCE:
                v = w
                break
            v = w
        else:
            logger.warning("Power iteration did not converge", extra={"component": k + 1})

        variance = float(v @ cov @ v)
        if variance <= 1e-12 * max(scale, 1e-300):
            raise InvalidArgumentError(f"data has rank below {n_components}")
        v = v if v[np.argmax(np.abs(v))] > 0 else -v
        components.append(v)
        variances.append(variance)
        cov = cov - variance * np.outer(v, v)

    return np.array(components), np.array(variances)


def pca_2d(points: ArrayLike) -> np.ndarray:
    """Project mean-centred points onto the top two principal axes"""
    x = np.asarray(points, dtype=float)
    components, _ = principal_components(x, 2)
    return (x - x.mean(axis=0)) @ components.T


def _with_ones(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _embedding_dataset(model: GbmapModel, data: Dataset) -> Dataset:
    emb = model.embed(data.x)
    return Dataset(
        x=_with_ones(emb),
        y=data.y,
        feature_names=tuple(f"f{j + 1}" for j in range(model.m)) + (INTERCEPT,),
        task=data.task,
        has_intercept=True,
    )


def embedding_feature_score(
    train: Dataset, test: Dataset, config: FitConfig
) -> tuple[float, float]:
    """Held-out score of a linear model on [embedding, 1] vs. on the original features.

    Args:
        train: Preprocessed training data
        test: Preprocessed test data
        config: GBMAP fit configuration for the embedding

    Returns:
        (embedding_score, original_score)
    """
    model = fit(train, config)
    emb_train = _embedding_dataset(model, train)
    emb_test = _embedding_dataset(model, test)
    on_embedding = score_model(fit_linear_baseline(emb_train), emb_test)
    on_original = score_model(fit_linear_baseline(train), test)
    return on_embedding, on_original


def _knn_predict(train: Dataset, metric, x: np.ndarray, k: int) -> np.ndarray:
    if train.task is TaskKind.CLASSIFICATION:
        return knn_classify(train, metric, x, k)
    return knn_regress(train, metric, x, k)


def run_benchmark(
    data: Dataset,
    config: FitConfig,
    repeats: int = 5,
    k: int = KNN_K,
    test_fraction: float = 0.5,
    seed: int = DEFAULT_SEED,
) -> list[BenchmarkRow]:
    """Held-out comparison of GBMAP against linear and kNN baselines.

    Each repeat draws a fresh seeded split, fits preprocessing on the training
    half and scores GBMAP, the linear baseline, Euclidean kNN, embedding kNN
    and the linear model on embedding features.
    """
    if repeats < 1:
        raise InvalidArgumentError(f"repeats must be at least 1, got {repeats}")
    rows = []
    for repeat in range(1, repeats + 1):
        raw_train, raw_test = train_test_split(data, test_fraction, seed + repeat - 1)
        stats = fit_preprocess(raw_train)
        train = apply_preprocess(stats, raw_train)
        test = apply_preprocess(stats, raw_test)

        model = fit(train, config, preprocessing=stats)
        emb_train = _embedding_dataset(model, train)
        emb_test = _embedding_dataset(model, test)
        row = BenchmarkRow(
            repeat=repeat,
            metric=metric_name(config.task),
            gbmap=score_model(model, test),
            linear=score_model(fit_linear_baseline(train), test),
            knn=score_predictions(
                config.task, test.y, _knn_predict(train, EuclideanMetric(), test.x, k)
            ),
            knn_gbmap=score_predictions(
                config.task, test.y, _knn_predict(train, EmbeddingMetric(model), test.x, k)
            ),
            embedding_linear=score_model(fit_linear_baseline(emb_train), emb_test),
        )
        logger.info("Benchmark repeat finished", extra=row.model_dump())
        rows.append(row)
    return rows


class ClusterVisualization(BaseModel):
    """2-D PCA coordinates of the embedding and original space, with cluster labels"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray
    embedding_coords: np.ndarray
    original_coords: np.ndarray
    embedding_centroid_distances: dict[str, float]
    original_centroid_distances: dict[str, float]
    embedding_spread: float = Field(..., description="Largest within-cluster RMS radius")
    original_spread: float


def _separation(coords: np.ndarray, labels: np.ndarray) -> tuple[dict[str, float], float]:
    groups = sorted(set(labels.tolist()))
    centroids = {g: coords[labels == g].mean(axis=0) for g in groups}
    distances = {
        f"{g}-{h}": float(np.linalg.norm(centroids[g] - centroids[h]))
        for g, h in combinations(groups, 2)
    }
    spread = max(
        float(np.sqrt(np.mean(np.sum((coords[labels == g] - centroids[g]) ** 2, axis=1))))
        for g in groups
    )
    return distances, spread


def cluster_visualization(
    seed: int = DEFAULT_SEED, config: Optional[FitConfig] = None
) -> ClusterVisualization:
    """Fit on the three-cluster dataset and project both spaces with PCA.

    Clusters b1 and b2 differ only along covariates the target ignores, so
    they separate in the original space but merge in the embedding.
    """
    data = gen_cluster_vis(seed)
    config = config or FitConfig(m=10, beta=5.0, ridge=1e-3, seed=seed)
    model = fit(data, config)

    labels = data.row_labels
    embedding_coords = pca_2d(model.embed(data.x))
    original_coords = pca_2d(data.x[:, :-1])
    emb_dist, emb_spread = _separation(embedding_coords, labels)
    orig_dist, orig_spread = _separation(original_coords, labels)
    logger.info(
        "Cluster visualisation computed",
        extra={"embedding_b1_b2": emb_dist["b1-b2"], "embedding_a_b2": emb_dist["a-b2"]},
    )
    return ClusterVisualization(
        labels=labels,
        embedding_coords=embedding_coords,
        original_coords=original_coords,
        embedding_centroid_distances=emb_dist,
        original_centroid_distances=orig_dist,
        embedding_spread=emb_spread,
        original_spread=orig_spread,
    )
