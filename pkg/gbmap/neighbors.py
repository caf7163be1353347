"""Exact k-nearest-neighbour queries under a pluggable metric

Two metrics are supported: Euclidean distance between the preprocessed
covariates, and Manhattan distance between GBMAP embeddings. Neighbour sets
are found by brute force and ordered by (distance, training index).
"""

import logging
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from gbmap.config import KNN_K
from gbmap.data import Dataset
from gbmap.ensemble import GbmapModel
from gbmap.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

_CHUNK_ELEMENTS = 4_000_000


class EuclideanMetric:
    """Euclidean distance in the original (preprocessed) covariate space"""

    name = "euclid"

    def transform(self, x: np.ndarray) -> np.ndarray:
        return x

    def distances(self, queries: np.ndarray, reference: np.ndarray) -> np.ndarray:
        diff = queries[:, None, :] - reference[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))


class EmbeddingMetric:
    """Manhattan distance between embeddings of a fitted model"""

    name = "gbmap"

    def __init__(self, model: GbmapModel):
        self.model = model

    def transform(self, x: np.ndarray) -> np.ndarray:
        return self.model.embed(x)

    def distances(self, queries: np.ndarray, reference: np.ndarray) -> np.ndarray:
        return np.abs(queries[:, None, :] - reference[None, :, :]).sum(axis=2)


Metric = Union[EuclideanMetric, EmbeddingMetric]


class NeighborIndex:
    """Training rows transformed once into the metric's space.

    Args:
        train: Training data (preprocessed)
        metric: EuclideanMetric or EmbeddingMetric
    """

    def __init__(self, train: Dataset, metric: Optional[Metric] = None):
        metric = metric if metric is not None else EuclideanMetric()
        if isinstance(metric, EmbeddingMetric) and metric.model.p != train.p:
            raise InvalidArgumentError(
                f"model dimension {metric.model.p} does not match data dimension {train.p}"
            )
        self.train = train
        self.metric = metric
        self._reference = metric.transform(train.x)

    @property
    def n(self) -> int:
        return self.train.n

    def _queries(self, x: ArrayLike) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.ndim != 2 or rows.shape[1] != self.train.p:
            raise InvalidArgumentError(
                f"expected points of dimension {self.train.p}, got shape {x.shape}"
            )
        return rows, single

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.n:
            raise InvalidArgumentError(f"k must lie in [1, {self.n}], got {k}")

    def query(self, x: ArrayLike, k: int = KNN_K) -> tuple[np.ndarray, np.ndarray]:
        """Neighbour indices and distances, each sorted by (distance, index).

        Returns:
            (indices, distances); shape (k,) for one point, (q, k) for a batch
        """
        self._check_k(k)
        rows, single = self._queries(x)
        queries = self.metric.transform(rows)
        order = np.arange(self.n)
        indices = np.empty((rows.shape[0], k), dtype=int)
        distances = np.empty((rows.shape[0], k))
        # bound the (chunk, n, dim) difference tensor
        chunk = max(1, _CHUNK_ELEMENTS // max(1, self.n * self._reference.shape[1]))
        for start in range(0, rows.shape[0], chunk):
            dist = self.metric.distances(queries[start : start + chunk], self._reference)
            for i, d in enumerate(dist, start):
                indices[i] = np.lexsort((order, d))[:k]
                distances[i] = d[indices[i]]
        if single:
            return indices[0], distances[0]
        return indices, distances


def knn_indices(
    train: Dataset, metric: Optional[Metric], x: ArrayLike, k: int = KNN_K
) -> np.ndarray:
    """Indices of the k nearest training rows; ties go to the lower index"""
    return NeighborIndex(train, metric).query(x, k)[0]


def knn_regress(
    train: Dataset, metric: Optional[Metric], x: ArrayLike, k: int = KNN_K
) -> Union[float, np.ndarray]:
    """Mean training target over the k nearest neighbours"""
    indices = knn_indices(train, metric, x, k)
    out = train.y[indices].mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def knn_classify(
    train: Dataset, metric: Optional[Metric], x: ArrayLike, k: int = KNN_K
) -> Union[float, np.ndarray]:
    """Sign of the neighbour mean of +-1 targets, with sign(0) = +1"""
    mean = np.asarray(knn_regress(train, metric, x, k))
    out = np.where(mean >= 0.0, 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


def knn_score(
    model: GbmapModel, train: Dataset, x: ArrayLike, k: int = KNN_K
) -> Union[float, np.ndarray]:
    """Mean model output f(x_i) over the k nearest neighbours in embedding space"""
    indices = knn_indices(train, EmbeddingMetric(model), x, k)
    scores = model.predict(train.x)[indices]
    out = scores.mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def neighbor_overlap(first: np.ndarray, second: np.ndarray) -> float:
    """Mean fraction of shared neighbours between two (q, k) index matrices"""
    first = np.atleast_2d(first)
    second = np.atleast_2d(second)
    if first.shape != second.shape:
        raise InvalidArgumentError("neighbour matrices must have matching shapes")
    shared = [len(set(a.tolist()) & set(b.tolist())) for a, b in zip(first, second)]
    return float(np.mean(shared) / first.shape[1])
