"""
K-nearest-neighbors multiclass classifier with deterministic tie-breaking.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from gaitbench.domain import ClassLabel
from gaitbench.exceptions import ConfigError, DatasetError
from gaitbench.preprocess import Standardizer, fit_standardizer


@dataclass(frozen=True)
class KnnModel:
    """Stored training vectors (standardized when a standardizer is attached) and their labels."""

    vectors: np.ndarray
    labels: tuple
    k: int
    standardizer: Optional[Standardizer] = None


def fit_knn(
    vectors: np.ndarray, labels: Sequence[ClassLabel], k: int = 5, standardize: bool = False,
) -> KnnModel:
    """
    Store the training set.

    :raises ConfigError: when k is not in 1..n.
    """
    matrix = np.asarray(vectors, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != len(labels):
        raise DatasetError(f'{len(labels)} labels for a training matrix of shape {matrix.shape}')
    if k < 1 or k > matrix.shape[0]:
        raise ConfigError('k', f'must be between 1 and the number of training vectors ({matrix.shape[0]}), got {k}')
    standardizer = None
    if standardize:
        standardizer = fit_standardizer(matrix)
        matrix = standardizer.apply(matrix)
    return KnnModel(vectors=matrix, labels=tuple(labels), k=k, standardizer=standardizer)


def _vote(distances: np.ndarray, labels: tuple, k: int) -> ClassLabel:
    # Stable sort: equal distances keep training order.
    nearest = np.argsort(distances, kind='stable')[:k]
    counts: Dict[ClassLabel, int] = {}
    summed: Dict[ClassLabel, float] = {}
    for index in nearest:
        label = labels[index]
        counts[label] = counts.get(label, 0) + 1
        summed[label] = summed.get(label, 0.0) + float(distances[index])
    return min(counts, key=lambda label: (-counts[label], summed[label], label.order))


def knn_predict(model: KnnModel, x: np.ndarray) -> ClassLabel:
    """
    Majority label among the k nearest training vectors (squared Euclidean).

    Vote ties go to the class with the smallest summed distance, then to canonical label order.
    """
    return knn_predict_many(model, np.asarray(x, dtype=float)[np.newaxis, :])[0]


def knn_predict_many(model: KnnModel, queries: np.ndarray) -> List[ClassLabel]:
    """Predict a batch of row vectors."""
    queries = np.asarray(queries, dtype=float)
    if queries.ndim != 2 or queries.shape[1] != model.vectors.shape[1]:
        raise DatasetError(f'expected vectors of length {model.vectors.shape[1]}, got shape {queries.shape}')
    if model.standardizer is not None:
        queries = model.standardizer.apply(queries)
    distances = ((queries[:, np.newaxis, :] - model.vectors[np.newaxis, :, :]) ** 2).sum(axis=2)
    return [_vote(row, model.labels, model.k) for row in distances]
