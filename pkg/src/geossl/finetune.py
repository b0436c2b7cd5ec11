"""Supervised phase: regression head on [I || T], RMSLE loss, k-fold model selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, check_compatible
from .config import ModelConfig, TrainPlan
from .contrastive import check_finite, subset
from .data.features import NormStats, impute_record, label_cap_filter, normalize
from .data.records import DataError, SampleRecord, to_batch
from .metrics import MetricsReport, evaluate
from .metrics import rmse as rmse_metric
from .model import Batch, SoilNet
from .optim import Adam, cosine_lr
from .tensor import DomainError, Tensor

log = logging.getLogger(__name__)


def rmsle(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if (y < 0).any() or (y_hat < 0).any():
        raise DomainError("rmsle needs non-negative values")
    return float(np.sqrt(np.mean((np.log1p(y) - np.log1p(y_hat)) ** 2)))


def rmsle_loss(y: np.ndarray, y_hat: Tensor) -> Tensor:
    if (np.asarray(y) < 0).any() or (y_hat.data < 0).any():
        raise DomainError("rmsle needs non-negative values")
    diff = T.log(y_hat + 1.0) - np.log1p(y)
    return T.sqrt((diff * diff).mean())


def split(records: list, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[list, list, list]:
    """Seeded shuffle into train/val/test; sizes are the rounded fractions, test takes the rest."""
    n = len(records)
    if n < 5:
        raise DataError(f"need at least 5 samples to split, got {n}")
    ids = [r.location_id for r in records] if hasattr(records[0], "location_id") else list(range(n))
    if len(set(ids)) != n:
        raise DataError("duplicate location ids; splits must be disjoint by location")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    parts = order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]
    return tuple([records[i] for i in p] for p in parts)


def kfold(n: int, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train, val) index pairs; every index validates exactly once."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} folds exceed the pool size {n}")
    folds = np.array_split(np.random.default_rng(seed).permutation(n), k)
    return [(np.sort(np.concatenate(folds[:i] + folds[i + 1:])), np.sort(folds[i])) for i in range(k)]


def prepare(records: list[SampleRecord], stats: NormStats | None = None, k: int = 2):
    """Impute then z-score; returns (records, stats)."""
    return normalize([impute_record(r, k) for r in records], stats)


def init_output_bias(model: SoilNet, labels: np.ndarray) -> None:
    """Start the head at the RMSLE-optimal constant: softplus(b) = expm1(mean(log1p(y)))."""
    target = max(float(np.expm1(np.mean(np.log1p(labels)))), 1e-6)
    model.head.params["fc2.b"].data[:] = target + math.log(-math.expm1(-target))  # inverse softplus


def predict(model: SoilNet, batch: Batch) -> np.ndarray:
    return model.predict(batch)


@dataclass
class FoldResult:
    fold: int
    best_val_rmse: float
    best_epoch: int
    state: dict[str, np.ndarray]
    report: MetricsReport


@dataclass
class FinetuneResult:
    approach: str
    model: SoilNet
    selected_fold: int
    folds: list[FoldResult]
    test_report: MetricsReport
    history: list[dict] = field(default_factory=list)
    predictions: list[tuple[int, float, float]] = field(default_factory=list)
    norm_stats: NormStats | None = None


ValMetric = Callable[[int, np.ndarray, np.ndarray], float]


def fit(model: SoilNet, train: Batch, val: Batch, plan: TrainPlan, seed: int,
        val_metric: ValMetric | None = None, fold: int = 0) -> tuple[dict, int, float, list[dict]]:
    """Train on ``train``; return the state with the lowest validation RMSE.

    Epoch -1 is the initial state.  ``val_metric(epoch, y, y_hat)`` overrides
    the validation RMSE (used in tests to inject a known curve).
    """
    score = val_metric or (lambda epoch, y, p: rmse_metric(y, p))
    trainable = model.named_parameters()
    if plan.freeze_encoders:
        trainable = {k: v for k, v in trainable.items() if k.startswith("head.")}
    trainable = {k: v for k, v in trainable.items() if not k.startswith("projection.")}
    opt = Adam(trainable, lr=plan.lr)
    rng = np.random.default_rng(seed)
    best_state, best_epoch = model.state_dict(), -1
    best = score(-1, val.labels, model.predict(val))
    history = [{"fold": fold, "epoch": -1, "lr": 0.0, "train_loss": None, "val_rmse": best}]
    n = len(train)
    for epoch in range(plan.epochs):
        opt.lr = cosine_lr(epoch, plan.epochs, plan.lr, plan.lr_min)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, plan.batch_size):
            b = subset(train, order[start:start + plan.batch_size])
            opt.zero_grad()
            loss = rmsle_loss(b.labels, model.predict_tensor(b, train=True, rng=rng))
            losses.append(check_finite(loss.item(), "fine-tuning loss"))
            T.backward(loss)
            opt.step()
        val_score = check_finite(score(epoch, val.labels, model.predict(val)), "validation RMSE")
        history.append({"fold": fold, "epoch": epoch, "lr": opt.lr,
                        "train_loss": float(np.mean(losses)), "val_rmse": val_score})
        if val_score < best:
            best, best_epoch, best_state = val_score, epoch, model.state_dict()
    return best_state, best_epoch, best, history


def finetune(records: list[SampleRecord], cfg: ModelConfig, plan: TrainPlan,
             init: Checkpoint | None = None, val_metric: ValMetric | None = None) -> FinetuneResult:
    """Split, k-fold train, pick the fold with the lowest validation RMSE, score it on test."""
    records = [r for r in records if r.labeled]
    if plan.label_cap is not None:
        records = label_cap_filter(records, plan.label_cap)
    if not records:
        raise DataError("fine-tuning needs labeled records")
    if init is not None:
        check_compatible(init.config, cfg)
    train_pool, val_part, test = split(records, plan.split, plan.seed)
    pool = train_pool + val_part
    stats = NormStats.from_dict(init.norm_stats) if init is not None and init.norm_stats else None
    folds = []
    fold_norms: list[NormStats] = []
    history: list[dict] = []
    for f, (tr_idx, va_idx) in enumerate(kfold(len(pool), plan.folds, plan.seed)):
        tr_recs, fold_stats = prepare([pool[i] for i in tr_idx], stats)
        va_recs, _ = prepare([pool[i] for i in va_idx], fold_stats)
        fold_norms.append(fold_stats)
        tr, va = to_batch(tr_recs, cfg.toggles), to_batch(va_recs, cfg.toggles)
        model = SoilNet(cfg, seed=plan.seed + f)
        if init is not None:
            enc = {k: v for k, v in init.state.items() if k.startswith(("image.", "series."))}
            model.load_state_dict(enc, strict=False)
        init_output_bias(model, tr.labels)
        state, epoch, best, hist = fit(model, tr, va, plan, plan.seed + 1000 * f + 1, val_metric, f)
        model.load_state_dict(state)
        report = evaluate(va.labels, model.predict(va), plan.seed, split=f"val-fold{f}")
        folds.append(FoldResult(f, best, epoch, state, report))
        history += hist
        log.info("fold %d: best val RMSE %.4f at epoch %d", f, best, epoch)
    chosen = min(folds, key=lambda fr: (fr.best_val_rmse, fr.fold))
    model = SoilNet(cfg, seed=plan.seed + chosen.fold)
    model.load_state_dict(chosen.state)
    te_recs, _ = prepare(test, fold_norms[chosen.fold])
    te = to_batch(te_recs, cfg.toggles)
    y_hat = model.predict(te)
    test_report = evaluate(te.labels, y_hat, plan.seed, split="test")
    preds = [(int(i), float(y), float(p)) for i, y, p in zip(te.location_ids, te.labels, y_hat)]
    return FinetuneResult("ssl" if init is not None else "supervised", model, chosen.fold, folds,
                          test_report, history, preds, fold_norms[chosen.fold])
