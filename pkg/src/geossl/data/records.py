from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..config import CHANNEL_NAMES, CLIMATE_NAMES, Toggles
from ..model import Batch

MODES = ("lucas-like", "raca-like")
MINERAL_SOC_CAP = 87.0  # g/kg, mineral-soil cut for content-mode labels


class DataError(ValueError):
    """Bad or corrupt dataset contents."""


@dataclass
class SampleRecord:
    location_id: int
    row: int
    col: int
    image: np.ndarray                  # [14, H, W]
    series: np.ndarray                 # [L, 11], NaN where missing
    missing: np.ndarray                # [L, 11] bool
    soc: float | None = None
    landcover: np.ndarray | None = None  # [H, W] class codes
    landcover_majority: int = -1

    @property
    def labeled(self) -> bool:
        return self.soc is not None


@dataclass
class Dataset:
    records: list[SampleRecord]
    mode: str = "lucas-like"
    image_size: int = 16
    series_length: int = 72
    channels: tuple[str, ...] = CHANNEL_NAMES
    variables: tuple[str, ...] = CLIMATE_NAMES
    generator: dict = field(default_factory=dict)
    norm_stats: dict | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown dataset mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labeled(self) -> list[SampleRecord]:
        return [r for r in self.records if r.labeled]

    @property
    def unlabeled(self) -> list[SampleRecord]:
        return [r for r in self.records if not r.labeled]

    def with_records(self, records: list[SampleRecord]) -> "Dataset":
        return replace(self, records=records)


def to_batch(records: list[SampleRecord], toggles: Toggles) -> Batch:
    """Stack records into model inputs, keeping only the channels/variables the toggles enable."""
    if not records:
        raise DataError("no records to batch")
    ch = toggles.channel_indices()
    var = toggles.variable_indices()
    images = np.stack([r.image[ch] for r in records]).astype(np.float64)
    series = np.stack([r.series[:, var] for r in records]).astype(np.float64) if var else None
    labels = None
    if all(r.labeled for r in records):
        labels = np.array([r.soc for r in records], dtype=np.float64)
    ids = np.array([r.location_id for r in records])
    return Batch(images, series, labels, ids)
