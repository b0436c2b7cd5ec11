"""Model checkpoints in the manifest-plus-blobs container (float64 blobs)."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .data.container import read_container, write_container

CHECKPOINT_FORMAT = "geossl-checkpoint"


class ConfigMismatchError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    state: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    norm_stats: dict | None = None


def write_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> dict:
    meta = {"format": CHECKPOINT_FORMAT, "config": ckpt.config.to_dict(),
            "meta": ckpt.meta, "norm_stats": ckpt.norm_stats}
    return write_container(path, meta, {k: (v, "<f8") for k, v in ckpt.state.items()})


def read_checkpoint(path: str | os.PathLike) -> Checkpoint:
    manifest, arrays = read_container(path, CHECKPOINT_FORMAT)
    return Checkpoint(ModelConfig.from_dict(manifest["config"]), arrays,
                      manifest.get("meta", {}), manifest.get("norm_stats"))


def config_diff(a: ModelConfig, b: ModelConfig) -> dict[str, tuple]:
    """Fields that differ between two configs, flattened with dotted names."""
    def flat(d, prefix=""):
        out = {}
        for k, v in d.items():
            if isinstance(v, dict):
                out.update(flat(v, f"{prefix}{k}."))
            else:
                out[f"{prefix}{k}"] = v
        return out

    fa, fb = flat(a.to_dict()), flat(b.to_dict())
    return {k: (fa.get(k), fb.get(k)) for k in sorted(set(fa) | set(fb)) if fa.get(k) != fb.get(k)}


def check_compatible(ckpt_cfg: ModelConfig, plan_cfg: ModelConfig, ignore=("temperature",)) -> None:
    diff = {k: v for k, v in config_diff(ckpt_cfg, plan_cfg).items() if k not in ignore}
    if diff:
        lines = ", ".join(f"{k}: checkpoint={a!r} run={b!r}" for k, (a, b) in diff.items())
        raise ConfigMismatchError(f"checkpoint config does not match the run config ({lines})")
