"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line
that is echoed in the terminal summary."""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from geossl.baselines import fit_basic
from geossl.config import PretrainPlan, TrainPlan, preset
from geossl.contrastive import contrastive_loss, ntxent_batch_loss, ntxent_pair_loss, partner, pretrain
from geossl.data.container import ChecksumError, directory_checksum
from geossl.data.features import knn_impute
from geossl.data.io import read_dataset, write_dataset
from geossl.data.records import to_batch
from geossl.data.synthetic import WorldParams, gen_synthetic_world
from geossl.experiments import ablation_benchmark, ssl_benchmark
from geossl.finetune import finetune, prepare, rmsle, rmsle_loss, split
from geossl.metrics import ccc, mae, quantile, r2, rmse, rpiq
from geossl.model import Batch, SoilNet
from geossl.tensor import Tensor, grad_check
from test_contrastive import brute_pair_loss
from test_metrics import direct_metrics


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# 1 ------------------------------------------------------------------------

def test_criterion_01_gradient_correctness():
    start = time.time()
    rng = np.random.default_rng(0)
    worst = {}
    for config in ("vit-trans", "vit-lstm", "cnn-trans"):
        # a wider init than training uses keeps attention-score gradients above
        # finite-difference round-off
        cfg = preset("desk", config, init_std=0.3)
        model = SoilNet(cfg, seed=1)
        b = Batch(rng.normal(size=(2, 14, 16, 16)), rng.normal(size=(2, 72, 11)), rng.gamma(2.0, 10.0, size=2))
        enc = list(model.encoder_parameters().values())
        proj = list(model.projection.params.values())
        head = list(model.head.params.values())
        e_con = grad_check(lambda: contrastive_loss(model, b), enc + proj, step=1e-5, max_coords=3)
        e_fit = grad_check(lambda: rmsle_loss(b.labels, model.predict_tensor(b)), enc + head,
                           step=1e-5, max_coords=3)
        worst[config] = max(e_con, e_fit)
    elapsed = time.time() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    record(1, ok, f"max rel err {', '.join(f'{k} {v:.1e}' for k, v in worst.items())}; {elapsed:.0f}s")


# 2 ------------------------------------------------------------------------

def test_criterion_02_analytic_contrastive_values():
    rng = np.random.default_rng(1)
    one = ntxent_batch_loss(Tensor(rng.normal(size=(2, 4))), 0.5).item()
    orth = ntxent_batch_loss(Tensor(np.eye(4)), 1.0).item()  # all four embeddings mutually orthogonal
    lim = 0.0
    for n in range(1, 7):
        s = Tensor(rng.normal(size=(2 * n, 5)))
        for i in range(2 * n):
            lim = max(lim, abs(ntxent_pair_loss(s, i, partner(i), 1e6).item() - math.log(2 * n - 1)))
    ok = abs(one) < 1e-12 and abs(orth - math.log(3)) < 1e-9 and lim < 1e-3
    record(2, ok, f"N=1 {one:.1e}; orthogonal-log3 {abs(orth - math.log(3)):.1e}; tau=1e6 {lim:.1e}")


# 3 ------------------------------------------------------------------------

def test_criterion_03_loss_oracles():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        s = rng.normal(size=(2 * n, int(rng.integers(2, 9))))
        tau = float(rng.uniform(0.05, 2.0))
        for i in range(2 * n):
            got = ntxent_pair_loss(Tensor(s), i, partner(i), tau).item()
            worst = max(worst, abs(got - brute_pair_loss(s.tolist(), i, partner(i), tau)))
    gap = 0.0
    for _ in range(100):
        y, p = rng.gamma(2, 10, size=30), rng.gamma(2, 10, size=30)
        gap = max(gap, abs(rmsle(y, p) - rmse(np.log1p(y), np.log1p(p))))
    record(3, worst <= 1e-12 and gap <= 1e-12, f"pair-loss oracle gap {worst:.1e}; rmsle vs rmse(log1p) {gap:.1e}")


# 4 ------------------------------------------------------------------------

def test_criterion_04_metric_oracles():
    rng = np.random.default_rng(4)
    worst, bounded = 0.0, True
    for _ in range(1000):
        n = int(rng.integers(5, 40))
        y = rng.gamma(2.0, 10.0, size=n)
        p = rng.normal(0.5, 0.5) * y + rng.normal(0, 10, size=n)
        ref = direct_metrics(y, p)
        got = {"mae": mae(y, p), "rmse": rmse(y, p), "r2": r2(y, p), "ccc": ccc(y, p), "rpiq": rpiq(y, p)}
        worst = max(worst, max(abs(got[k] - ref[k]) for k in ref))
        bounded &= -1.0 <= got["ccc"] <= 1.0
    y = np.array([0.0, 12.5, 20.0, 38.6, 50.0])
    p = y + 18.31 * np.array([1, -1, 1, -1, 1])
    table = rpiq(y, p)
    ok = worst <= 1e-12 and bounded and quantile(y, 0.25) == 12.5 and abs(table - 1.4255) <= 1e-4
    record(4, ok, f"oracle gap {worst:.1e}; CCC bounded {bounded}; RPIQ(12.5, 38.6, 18.31) = {table:.4f}")


# 5 ------------------------------------------------------------------------

def test_criterion_05_basic_baseline():
    train_r2, test_r2 = [], []
    for seed in range(5):
        w = gen_synthetic_world(seed, WorldParams(n_labeled=1000, n_unlabeled=0))
        tr, va, te = split(w.labeled, seed=seed)
        y_tr = np.array([r.soc for r in tr + va])
        y_te = np.array([r.soc for r in te])
        basic = fit_basic(y_tr)
        train_r2.append(r2(y_tr, basic.predict(y_tr.size)))
        test_r2.append(r2(y_te, basic.predict(y_te.size)))
    ok = all(v == 0.0 for v in train_r2) and max(abs(v) for v in test_r2) < 0.05
    record(5, ok, f"train R2 {set(train_r2)}; max |test R2| {max(abs(v) for v in test_r2):.4f}")


# 6 ------------------------------------------------------------------------

def test_criterion_06_ssl_beats_supervised():
    start = time.time()
    gains = []
    for seed in range(10):
        c = ssl_benchmark(seed)
        gains.append(c.improvement)
        print(f"  seed {seed}: ssl {c.ssl.test_report.rmse:.3f} supervised {c.supervised.test_report.rmse:.3f}")
    elapsed = time.time() - start
    wins = sum(g > 0 for g in gains)
    ok = wins >= 8 and np.mean(gains) > 0 and elapsed < 1800
    record(6, ok, f"SSL wins {wins}/10; mean RMSE improvement {np.mean(gains):.3f}; {elapsed / 60:.1f} min")


# 7 ------------------------------------------------------------------------

def test_criterion_07_climate_ablation():
    full, no_clim = [], []
    for seed in range(5):
        a, b = ablation_benchmark(seed)
        full.append(a.test_report.rmse)
        no_clim.append(b.test_report.rmse)
        print(f"  seed {seed}: 1111 {full[-1]:.3f} 1100 {no_clim[-1]:.3f}")
    m_full, m_none = float(np.median(full)), float(np.median(no_clim))
    record(7, m_none > m_full, f"median test RMSE 1100 {m_none:.3f} vs 1111 {m_full:.3f}")


# 8 ------------------------------------------------------------------------

def test_criterion_08_determinism(tmp_path):
    p = WorldParams(size=64, n_labeled=30, n_unlabeled=40, n_bumps=8, bump_scale=(8.0, 20.0))
    sums, hists, reports = [], [], []
    cfg = preset("desk", "vit-trans", embed_dim=8, depth=1, heads=2)
    for run in range(2):
        w = gen_synthetic_world(11, p)
        write_dataset(tmp_path / f"d{run}", w.to_dataset())
        sums.append(directory_checksum(tmp_path / f"d{run}"))
        pool, _ = prepare(w.unlabeled)
        res = pretrain(to_batch(pool, cfg.toggles), cfg, PretrainPlan(epochs=2, batch_size=16, lr=1e-3, seed=11))
        hists.append(res.history)
        ft = finetune(w.labeled, cfg, TrainPlan(epochs=2, batch_size=16, lr=1e-3, folds=2, seed=11))
        reports.append((ft.test_report, [f.report for f in ft.folds], ft.history))
    ok = sums[0] == sums[1] and hists[0] == hists[1] and reports[0] == reports[1]
    record(8, ok, f"checksums equal {sums[0] == sums[1]}; loss histories equal {hists[0] == hists[1]}; "
                  f"metric reports equal {reports[0] == reports[1]}")


# 9 ------------------------------------------------------------------------

def test_criterion_09_container_integrity(tmp_path):
    w = gen_synthetic_world(9, WorldParams(size=64, n_labeled=40, n_unlabeled=60, n_bumps=8, bump_scale=(8.0, 20.0)))
    write_dataset(tmp_path / "a", w.to_dataset())
    write_dataset(tmp_path / "b", read_dataset(tmp_path / "a"))
    exact = directory_checksum(tmp_path / "a") == directory_checksum(tmp_path / "b")
    named = 0
    blobs = sorted((tmp_path / "a" / "blobs").iterdir())
    for blob in blobs:
        raw = blob.read_bytes()
        corrupt = bytearray(raw)
        corrupt[len(raw) // 2] ^= 0x40
        blob.write_bytes(bytes(corrupt))
        try:
            read_dataset(tmp_path / "a")
        except ChecksumError as exc:
            named += blob.stem in str(exc)
        blob.write_bytes(raw)
    ok = exact and named == len(blobs)
    record(9, ok, f"round trip bit-exact {exact}; corruption named {named}/{len(blobs)} blobs")


# 10 -----------------------------------------------------------------------

def test_criterion_10_imputation_contract():
    rng = np.random.default_rng(10)
    identity = all(np.array_equal(knn_impute(s, np.zeros(s.shape, bool)), s)
                   for s in (rng.normal(size=(72, 11)) for _ in range(50)))
    bounded = 0
    for _ in range(500):
        L, V = int(rng.integers(4, 73)), int(rng.integers(1, 12))
        s = rng.normal(size=(L, V)) * 10
        mask = rng.random((L, V)) < rng.uniform(0.05, 0.7)
        for v in range(V):
            if (~mask[:, v]).sum() < 2:
                mask[rng.choice(L, 2, replace=False), v] = False
        out = knn_impute(np.where(mask, np.nan, s), mask)
        bounded += all(s[~mask[:, v], v].min() <= out[:, v].min() and out[:, v].max() <= s[~mask[:, v], v].max()
                       for v in range(V))
    record(10, identity and bounded == 500, f"identity {identity}; bounded {bounded}/500")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
