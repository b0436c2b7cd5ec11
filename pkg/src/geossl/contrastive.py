"""Cross-modal contrastive pretraining.

Each location contributes one image embedding and one series embedding.  After
the shared projection head they are interleaved as
``s = [p(I_1), p(T_1), p(I_2), p(T_2), ...]`` so the positive partner of row
``a`` (0-based) is ``a ^ 1``; every other row in the batch is a negative.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ModelConfig, PretrainPlan
from .encoders import MissingValuesError
from .model import Batch, SoilNet
from .optim import Adam, cosine_lr
from .tensor import DomainError, Tensor

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when a loss turns NaN or infinite."""


def cosine_sim(u, v) -> Tensor:
    u, v = T.as_tensor(u), T.as_tensor(v)
    nu = T.sqrt(T.tsum(u * u))
    nv = T.sqrt(T.tsum(v * v))
    if nu.item() == 0 or nv.item() == 0:
        raise DomainError("cosine similarity of a zero-norm vector")
    return T.tsum(u * v) / (nu * nv)


def similarity_matrix(s: Tensor) -> Tensor:
    """Pairwise cosine similarities of the rows of ``s`` ([2N, k] -> [2N, 2N])."""
    norms = T.sqrt(T.tsum(s * s, axis=1, keepdims=True))
    if np.any(norms.data == 0):
        raise DomainError("an embedding has zero norm")
    unit = s / norms
    return unit @ unit.T


def interleave(image_proj: Tensor, series_proj: Tensor) -> Tensor:
    """[N, k] and [N, k] -> [2N, k] with image rows at even (0-based) indices."""
    n, k = image_proj.shape
    return T.stack([image_proj, series_proj], axis=1).reshape(2 * n, k)


def partner(a: int) -> int:
    return a ^ 1


def _check_batch(s: Tensor) -> int:
    rows = s.shape[0]
    if rows == 0:
        raise ValueError("empty contrastive batch")
    if rows % 2:
        raise ValueError(f"contrastive batch must have an even number of rows, got {rows}")
    return rows


def ntxent_pair_loss(s: Tensor, i: int, j: int, temperature: float) -> Tensor:
    """Loss of anchor ``i`` against its positive ``j``; the denominator runs over all k != i."""
    if i == j:
        raise ValueError("anchor and positive must differ")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    rows = _check_batch(s)
    if partner(i) != j:
        raise ValueError(f"({i}, {j}) is not a positive pair under the interleaving rule")
    logits = similarity_matrix(s)[i] * (1.0 / temperature)
    others = np.array([k for k in range(rows) if k != i])
    return T.logsumexp(logits[others], axis=0) - logits[j]


def ntxent_batch_loss(s: Tensor, temperature: float) -> Tensor:
    """Mean over the N positive pairs of (l_ij + l_ji) / 2, i.e. the mean over all 2N anchors."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    rows = _check_batch(s)
    logits = similarity_matrix(s) * (1.0 / temperature)
    # drop the diagonal: [2N, 2N] -> [2N, 2N-1]
    off = ~np.eye(rows, dtype=bool)
    r, c = np.nonzero(off)
    denom = T.logsumexp(logits[r, c].reshape(rows, rows - 1), axis=1)
    anchors = np.arange(rows)
    positives = logits[anchors, anchors ^ 1]
    return (denom - positives).mean()


def contrastive_loss(model: SoilNet, batch: Batch, train: bool = False, rng=None) -> Tensor:
    image_repr, series_repr = model.encode(batch, train, rng)
    if series_repr is None:
        raise ValueError("contrastive pretraining needs both branches (climate toggles are off)")
    s = interleave(model.projection(image_repr), model.projection(series_repr))
    return ntxent_batch_loss(s, model.cfg.temperature)


def check_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"{what} is not finite ({value})")
    return value


def pretrain_step(model: SoilNet, batch: Batch, optimizer: Adam, rng=None) -> float:
    """Encode, project, NT-Xent, backprop, one Adam step. Returns the pre-step loss."""
    if batch.series is not None and np.isnan(batch.series).any():
        raise MissingValuesError("batch has missing series values; run knn_impute first")
    optimizer.zero_grad()
    loss = contrastive_loss(model, batch, train=True, rng=rng)
    value = check_finite(loss.item(), "contrastive loss")
    T.backward(loss)
    optimizer.step()
    return value


@dataclass
class PretrainResult:
    config: ModelConfig
    state: dict[str, np.ndarray]
    history: list[tuple[int, int, float]] = field(default_factory=list)
    final_loss: float = float("nan")
    best_loss: float = float("nan")

    def epoch_means(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for epoch, _, loss in self.history:
            by_epoch.setdefault(epoch, []).append(loss)
        return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]


def subset(batch: Batch, idx: np.ndarray) -> Batch:
    return Batch(
        images=batch.images[idx],
        series=None if batch.series is None else batch.series[idx],
        labels=None if batch.labels is None else batch.labels[idx],
        location_ids=None if batch.location_ids is None else batch.location_ids[idx],
    )


def pretrain(data: Batch, cfg: ModelConfig, plan: PretrainPlan, model: SoilNet | None = None) -> PretrainResult:
    """Seeded mini-batch contrastive training over the whole unlabeled pool."""
    n = len(data)
    if n < plan.batch_size:
        raise ValueError(f"dataset has {n} samples, fewer than one batch of {plan.batch_size}")
    model = model if model is not None else SoilNet(cfg, seed=plan.seed)
    params = {k: v for k, v in model.named_parameters().items() if not k.startswith("head.")}
    opt = Adam(params, lr=plan.lr)
    rng = np.random.default_rng(plan.seed + 1)
    result = PretrainResult(cfg, model.state_dict())
    step = 0
    for epoch in range(plan.epochs):
        opt.lr = cosine_lr(epoch, plan.epochs, plan.lr, plan.lr_min)
        order = rng.permutation(n)
        for start in range(0, n, plan.batch_size):
            idx = order[start:start + plan.batch_size]
            loss = pretrain_step(model, subset(data, idx), opt, rng)
            result.history.append((epoch, step, loss))
            step += 1
        log.info("pretrain epoch %d/%d mean loss %.4f", epoch + 1, plan.epochs, result.epoch_means()[-1])
    result.state = model.state_dict()
    if result.history:
        result.final_loss = result.history[-1][2]
        result.best_loss = min(h[2] for h in result.history)
    return result
