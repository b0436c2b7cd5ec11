"""Reference predictors: the constant "Basic" baseline and k-nearest-neighbour regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.records import DataError, SampleRecord

STATISTICS = ("mean", "median")


@dataclass(frozen=True)
class BasicPredictor:
    statistic: str
    value: float

    def predict(self, n: int) -> np.ndarray:
        return np.full(n, self.value)


def fit_basic(labels, statistic: str = "mean") -> BasicPredictor:
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size == 0:
        raise DataError("cannot fit a baseline on zero labels")
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}, got {statistic!r}")
    return BasicPredictor(statistic, float(np.mean(y) if statistic == "mean" else np.median(y)))


def default_statistic(mode: str) -> str:
    """Mean for content-style labels, median for skewed stock-style labels."""
    return "median" if mode == "raca-like" else "mean"


def features(records: list[SampleRecord]) -> np.ndarray:
    """Flattened patch followed by the flattened series (records assumed normalized and imputed)."""
    return np.stack([np.concatenate([r.image.ravel(), r.series.ravel()]) for r in records]).astype(np.float64)


def knn_regress(query: np.ndarray, train_x: np.ndarray, train_y: np.ndarray,
                train_ids: np.ndarray, k: int = 5) -> np.ndarray:
    """Mean label of the ``k`` nearest training rows (Euclidean); equal distances go to the lower id."""
    train_x = np.asarray(train_x, dtype=np.float64)
    n = train_x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    train_y = np.asarray(train_y, dtype=np.float64)
    ids = np.asarray(train_ids)
    sq = (query ** 2).sum(1)[:, None] - 2.0 * query @ train_x.T + (train_x ** 2).sum(1)[None, :]
    d = np.maximum(sq, 0.0)
    out = np.empty(query.shape[0])
    for i in range(query.shape[0]):
        order = np.lexsort((ids, d[i]))[:k]
        out[i] = train_y[order].mean()
    return out
