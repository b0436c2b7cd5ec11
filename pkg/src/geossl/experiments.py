"""Glue shared by the CLI, the benchmark scripts and the acceptance suite:
pretraining on a record set, SSL-vs-supervised comparisons, the ablation grid."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig, PretrainPlan, TrainPlan, preset
from .contrastive import PretrainResult, pretrain
from .data.features import impute_record, normalize
from .data.records import DataError, SampleRecord, to_batch
from .finetune import FinetuneResult, finetune

log = logging.getLogger(__name__)

ABLATION_TOGGLES = ("1111", "1011", "1101", "1110", "1100")
ABLATION_CONFIGS = ("vit-trans", "vit-lstm", "cnn-trans")


def pretraining_pool(records: list[SampleRecord]) -> list[SampleRecord]:
    """Unlabeled records when there are any, otherwise every record with its label ignored."""
    pool = [r for r in records if not r.labeled]
    return pool if pool else list(records)


def run_pretrain(records: list[SampleRecord], cfg: ModelConfig, plan: PretrainPlan) -> tuple[Checkpoint, PretrainResult]:
    """Impute, fit normalisation on the pool, contrastively pretrain; the
    checkpoint carries the normalisation statistics for fine-tuning."""
    pool = pretraining_pool(records)
    if not pool:
        raise DataError("pretraining needs at least one record")
    prepared, stats = normalize([impute_record(r) for r in pool])
    batch = to_batch(prepared, cfg.toggles)
    if len(batch) < plan.batch_size:
        plan = replace(plan, batch_size=len(batch))
    result = pretrain(batch, cfg, plan)
    meta = {"epochs": plan.epochs, "batch_size": plan.batch_size, "lr": plan.lr,
            "seed": plan.seed, "n_records": len(batch), "final_loss": result.final_loss}
    return Checkpoint(cfg, result.state, meta, stats.to_dict()), result


@dataclass
class Comparison:
    seed: int
    ssl: FinetuneResult
    supervised: FinetuneResult
    pretrain: PretrainResult

    @property
    def improvement(self) -> float:
        """Test RMSE of the supervised run minus that of the SSL run (positive means SSL wins)."""
        return self.supervised.test_report.rmse - self.ssl.test_report.rmse


def compare(records: list[SampleRecord], cfg: ModelConfig, pretrain_plan: PretrainPlan,
            train_plan: TrainPlan) -> Comparison:
    """SSL-initialised versus random-initialised fine-tuning on the same splits."""
    ckpt, pre = run_pretrain(records, cfg, pretrain_plan)
    ssl = finetune(records, cfg, train_plan, init=ckpt)
    sup = finetune(records, cfg, train_plan)
    return Comparison(train_plan.seed, ssl, sup, pre)


@dataclass(frozen=True)
class Cell:
    approach: str   # "supervised" | "ssl"
    config: str
    toggles: str

    @property
    def cell_id(self) -> str:
        return f"{self.approach}/{self.config}/{self.toggles}"


def ablation_grid() -> list[Cell]:
    """Supervised rows for every toggle set and config, then the full-feature SSL rows."""
    cells = [Cell("supervised", c, t) for c in ABLATION_CONFIGS for t in ABLATION_TOGGLES]
    return cells + [Cell("ssl", c, "1111") for c in ABLATION_CONFIGS]


class CellError(RuntimeError):
    def __init__(self, cell: Cell, cause: BaseException):
        super().__init__(f"ablation cell {cell.cell_id} failed: {cause}")
        self.cell = cell
        self.cause = cause


def run_cell(cell: Cell, records: list[SampleRecord], preset_name: str, train_plan: TrainPlan,
             pretrain_plan: PretrainPlan, overrides: dict | None = None) -> FinetuneResult:
    cfg = preset(preset_name, cell.config, cell.toggles, **(overrides or {}))
    init = None
    if cell.approach == "ssl":
        init, _ = run_pretrain(records, cfg, pretrain_plan)
    return finetune(records, cfg, train_plan, init=init)


def _run_cell_safe(args):
    cell = args[0]
    try:
        return run_cell(*args)
    except Exception as exc:  # re-raised in the parent with the cell id attached
        raise CellError(cell, exc) from exc


def worker_count() -> int:
    raw = os.environ.get("GEOSSL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"GEOSSL_THREADS must be an integer, got {raw!r}") from None


def run_ablation(records: list[SampleRecord], preset_name: str, train_plan: TrainPlan,
                 pretrain_plan: PretrainPlan, cells: list[Cell] | None = None,
                 overrides: dict | None = None, workers: int | None = None) -> list[tuple[Cell, FinetuneResult]]:
    """Run every cell; results come back in grid order whatever the worker count."""
    cells = ablation_grid() if cells is None else cells
    workers = worker_count() if workers is None else workers
    jobs = [(c, records, preset_name, train_plan, pretrain_plan, overrides) for c in cells]
    if workers <= 1:
        results = []
        for job in jobs:
            log.info("ablation cell %s", job[0].cell_id)
            results.append(_run_cell_safe(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_safe, jobs))
    return list(zip(cells, results))


def median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


# Desk benchmark: a hotter, shorter schedule than the default plans so
# that ten seeds of pretrain + two fine-tunings fit in a CPU half hour.
BENCHMARK_PRETRAIN = PretrainPlan(epochs=5, batch_size=64, lr=1e-3, lr_min=1e-5)
BENCHMARK_TRAIN = TrainPlan(epochs=30, batch_size=32, lr=1e-3, lr_min=1e-5)


def benchmark_world_params(**overrides):
    """Default world: 5000 unlabeled, 200 labeled, latent carried by climate amplitude and trend."""
    from .data.synthetic import WorldParams
    return WorldParams(**overrides)


def ssl_benchmark(seed: int, config: str = "vit-trans", **world) -> Comparison:
    """One seed of the planted-signal SSL-vs-supervised benchmark."""
    from .data.synthetic import gen_synthetic_world
    w = gen_synthetic_world(seed, benchmark_world_params(**world))
    cfg = preset("desk", config)
    return compare(w.labeled + w.unlabeled, cfg, replace(BENCHMARK_PRETRAIN, seed=seed),
                   replace(BENCHMARK_TRAIN, seed=seed))


def ablation_benchmark(seed: int, config: str = "vit-trans", toggles: tuple[str, str] = ("1111", "1100"),
                       **world) -> tuple[FinetuneResult, ...]:
    """Supervised fine-tuning of the same splits under each toggle set."""
    from .data.synthetic import gen_synthetic_world
    w = gen_synthetic_world(seed, benchmark_world_params(**world))
    plan = replace(BENCHMARK_TRAIN, seed=seed)
    return tuple(finetune(w.labeled, preset("desk", config, t), plan) for t in toggles)
