"""Regression metrics: MAE, R^2, RMSE, RPIQ, CCC."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given inputs."""


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} observed vs {y_hat.size} predicted")
    if y.size == 0:
        raise MetricError("empty input")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def r2(y, y_hat) -> float:
    """Coefficient of determination as a fraction (multiply by 100 for percent)."""
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise MetricError("R^2 needs at least two observations")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise MetricError("R^2 undefined: observed values are constant")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)


def quantile(y, p: float) -> float:
    """Inclusive linear-interpolation percentile: rank h = (n - 1) p."""
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    h = (y.size - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, y.size - 1)
    return float(y[lo] + (h - lo) * (y[hi] - y[lo]))


def quartiles(y) -> tuple[float, float]:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size < 4:
        raise MetricError("quartiles need at least 4 values")
    return quantile(y, 0.25), quantile(y, 0.75)


def rpiq(y, y_hat) -> float:
    """Interquartile range of the observed values over RMSE."""
    y, y_hat = _pair(y, y_hat)
    q1, q3 = quartiles(y)
    e = rmse(y, y_hat)
    if e == 0:
        raise MetricError("RPIQ undefined: RMSE is zero")
    return (q3 - q1) / e


def pearson(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    dy, dp = y - y.mean(), y_hat - y_hat.mean()
    den = math.sqrt(np.sum(dy ** 2) * np.sum(dp ** 2))
    if den == 0:
        raise MetricError("correlation undefined for a constant vector")
    return float(np.sum(dy * dp) / den)


def ccc(y, y_hat) -> float:
    """Lin's concordance correlation with population (1/n) moments.

    Evaluated as ``2 cov / (var_y + var_p + (mu_y - mu_p)^2)``, which equals
    ``2 rho sd_y sd_p / (...)`` and stays defined (= 0) for a constant
    prediction such as the mean baseline.
    """
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise MetricError("CCC needs at least two observations")
    mu_y, mu_p = y.mean(), y_hat.mean()
    var_y = np.mean((y - mu_y) ** 2)
    var_p = np.mean((y_hat - mu_p) ** 2)
    cov = np.mean((y - mu_y) * (y_hat - mu_p))
    den = var_y + var_p + (mu_y - mu_p) ** 2
    if den == 0:
        raise MetricError("CCC undefined: both vectors are the same constant")
    return float(np.clip(2.0 * cov / den, -1.0, 1.0))


METRIC_NAMES = ("mae", "r2_percent", "rmse", "rpiq", "ccc")


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    r2_percent: float | None
    rmse: float
    rpiq: float | None
    ccc: float | None
    n: int
    seed: int
    split: str = "test"

    def metrics_dict(self) -> dict:
        """The five metrics plus ``n`` and ``seed``."""
        return {"mae": self.mae, "r2_percent": self.r2_percent, "rmse": self.rmse,
                "rpiq": self.rpiq, "ccc": self.ccc, "n": self.n, "seed": self.seed}


def _maybe(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def evaluate(y, y_hat, seed: int = 0, split: str = "test") -> MetricsReport:
    y, y_hat = _pair(y, y_hat)
    r = _maybe(r2, y, y_hat)
    return MetricsReport(
        mae=mae(y, y_hat),
        r2_percent=None if r is None else 100.0 * r,
        rmse=rmse(y, y_hat),
        rpiq=_maybe(rpiq, y, y_hat),
        ccc=_maybe(ccc, y, y_hat),
        n=int(y.size),
        seed=seed,
        split=split,
    )
