import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geossl.metrics import MetricError, ccc, evaluate, mae, pearson, quantile, r2, rmse, rpiq


def direct_metrics(y, p):
    """Plain-Python summation, no numpy reductions."""
    y, p = [float(v) for v in y], [float(v) for v in p]
    n = len(y)
    mae_ = sum(abs(a - b) for a, b in zip(y, p)) / n
    rmse_ = math.sqrt(sum((a - b) ** 2 for a, b in zip(y, p)) / n)
    my, mp = sum(y) / n, sum(p) / n
    ss_tot = sum((a - my) ** 2 for a in y)
    r2_ = 1 - sum((a - b) ** 2 for a, b in zip(y, p)) / ss_tot
    vy = sum((a - my) ** 2 for a in y) / n
    vp = sum((b - mp) ** 2 for b in p) / n
    cov = sum((a - my) * (b - mp) for a, b in zip(y, p)) / n
    rho = cov / math.sqrt(vy * vp)
    ccc_ = 2 * rho * math.sqrt(vy) * math.sqrt(vp) / (vy + vp + (my - mp) ** 2)
    s = sorted(y)

    def q(pr):
        h = (n - 1) * pr
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        return s[lo] + (h - lo) * (s[hi] - s[lo])

    return {"mae": mae_, "rmse": rmse_, "r2": r2_, "ccc": ccc_, "rpiq": (q(0.75) - q(0.25)) / rmse_}


def test_against_direct_summation_1000_pairs():
    rng = np.random.default_rng(0)
    y = rng.gamma(3.0, 10.0, size=1000)
    p = 0.7 * y + rng.normal(0, 8, size=1000) + 4
    ref = direct_metrics(y, p)
    assert abs(mae(y, p) - ref["mae"]) < 1e-12
    assert abs(rmse(y, p) - ref["rmse"]) < 1e-12
    assert abs(r2(y, p) - ref["r2"]) < 1e-12
    assert abs(ccc(y, p) - ref["ccc"]) < 1e-12
    assert abs(rpiq(y, p) - ref["rpiq"]) < 1e-12


def test_rpiq_worked_example():
    y = np.array([0.0, 12.5, 20.0, 38.6, 50.0])
    assert quantile(y, 0.25) == 12.5 and quantile(y, 0.75) == 38.6
    p = y + 18.31 * np.array([1, -1, 1, -1, 1])
    assert abs(rmse(y, p) - 18.31) < 1e-12
    assert abs(rpiq(y, p) - 1.4255) < 1e-4


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=finite), st.data())
def test_ccc_bounded(y, data):
    p = data.draw(arrays(np.float64, y.shape, elements=finite))
    try:
        c = ccc(y, p)
    except MetricError:
        return
    assert -1.0 <= c <= 1.0


def test_ccc_identity_and_constant_prediction():
    y = np.arange(10.0)
    assert ccc(y, y) == pytest.approx(1.0, abs=1e-15)
    assert ccc(y, np.full(10, 3.0)) == 0.0


def test_perfect_and_mean_predictions():
    y = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0])
    assert r2(y, y) == 1.0 and rmse(y, y) == 0.0 and mae(y, y) == 0.0
    assert r2(y, np.full_like(y, y.mean())) == 0.0


def test_degenerate_inputs():
    with pytest.raises(MetricError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(MetricError):
        mae([], [])
    with pytest.raises(MetricError):
        r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(MetricError):
        rpiq([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(MetricError):
        pearson([1.0, 1.0], [1.0, 2.0])


def test_evaluate_report_keeps_undefined_metrics_empty():
    rep = evaluate([1.0, 2.0, 3.0], [1.0, 2.0, 3.5], seed=7)
    assert rep.rpiq is None and rep.n == 3 and rep.seed == 7
    assert set(rep.metrics_dict()) == {"mae", "r2_percent", "rmse", "rpiq", "ccc", "n", "seed"}
    assert rep.r2_percent == pytest.approx(100 * r2([1.0, 2.0, 3.0], [1.0, 2.0, 3.5]))
