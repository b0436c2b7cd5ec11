"""Feature engineering: spectral indices, patch extraction, temporal KNN
imputation, land-cover screening and z-score normalisation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .records import MINERAL_SOC_CAP, DataError, SampleRecord

# land-cover classes of the synthetic world
CROPLAND, GRASSLAND, FOREST, BARELAND, BUILT_UP, WATER = range(6)
LANDCOVER_NAMES = ("cropland", "grassland", "forest", "bareland", "built-up", "water")
IRRELEVANT_CLASSES = frozenset({BUILT_UP, WATER})


class OutOfBoundsError(DataError):
    pass


def _nd(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = a - b
    den = a + b
    bad = den == 0
    out = np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=~bad)
    return out, bad


def compute_indices(bands: np.ndarray) -> tuple[np.ndarray, int]:
    """Five normalised-difference indices from the seven reflectance bands.

    ``bands`` is ``[7, ...]`` ordered B1..B7 (ultra blue, blue, green, red,
    NIR, SWIR1, SWIR2).  Returns ``([5, ...], n_degenerate)``; pixels with a
    zero denominator are set to 0 and counted.
    """
    if bands.shape[0] != 7:
        raise ValueError(f"expected 7 band planes, got {bands.shape[0]}")
    green, red, nir, swir1, swir2 = (bands[i].astype(np.float64) for i in (2, 3, 4, 5, 6))
    pairs = [
        (swir1, swir2),   # clay minerals
        (nir, swir1),     # ferrous minerals
        (red, green),     # carbonate
        (swir1, green),   # rock outcrop
        (nir, red),       # NDVI
    ]
    planes, flagged = [], 0
    for a, b in pairs:
        plane, bad = _nd(a, b)
        planes.append(plane)
        flagged += int(bad.sum())
    return np.stack(planes), flagged


def extract_patch(stack: np.ndarray, center: tuple[int, int], size: int) -> np.ndarray:
    """``size x size`` window of ``stack[..., H, W]`` with ``center`` at index ``size // 2``."""
    r, c = center
    H, W = stack.shape[-2:]
    r0, c0 = r - size // 2, c - size // 2
    if size < 1 or r0 < 0 or c0 < 0 or r0 + size > H or c0 + size > W:
        raise OutOfBoundsError(f"{size}x{size} window at {center} leaves the {H}x{W} grid")
    return stack[..., r0:r0 + size, c0:c0 + size].copy()


def knn_impute(series: np.ndarray, missing: np.ndarray, k: int = 2) -> np.ndarray:
    """Fill each missing month with the mean of the ``k`` temporally nearest
    observed months of the same variable (ties go to the earlier month)."""
    series = np.array(series, dtype=np.float64)
    missing = np.asarray(missing, dtype=bool)
    if not missing.any():
        return series
    L = series.shape[0]
    months = np.arange(L)
    for v in np.nonzero(missing.any(axis=0))[0]:
        observed = months[~missing[:, v]]
        if observed.size == 0:
            raise DataError(f"variable {v} has no observed values to impute from")
        if observed.size < k:
            raise DataError(f"variable {v} has {observed.size} observed values, fewer than k={k}")
        values = series[observed, v]
        for t in months[missing[:, v]]:
            # lexsort: primary key distance, secondary key month index
            order = np.lexsort((observed, np.abs(observed - t)))[:k]
            series[t, v] = values[order].mean()
    return series


def impute_record(rec: SampleRecord, k: int = 2) -> SampleRecord:
    if not rec.missing.any():
        return rec
    return replace(rec, series=knn_impute(rec.series, rec.missing, k),
                   missing=np.zeros_like(rec.missing))


def modal_class(landcover: np.ndarray) -> int:
    counts = np.bincount(np.asarray(landcover, dtype=np.int64).ravel())
    return int(np.argmax(counts))  # ties -> lowest class code


def landcover_filter(landcover: np.ndarray, irrelevant_classes=IRRELEVANT_CLASSES) -> bool:
    """Keep a patch unless its most frequent land-cover class is irrelevant."""
    if landcover is None:
        raise DataError("record has no land-cover plane")
    return modal_class(landcover) not in set(irrelevant_classes)


def label_cap_filter(records: list[SampleRecord], cap: float = MINERAL_SOC_CAP) -> list[SampleRecord]:
    """Drop labeled records at or above ``cap`` (mineral-soil subset)."""
    return [r for r in records if r.soc is None or r.soc < cap]


@dataclass
class NormStats:
    image_mean: np.ndarray
    image_std: np.ndarray
    series_mean: np.ndarray
    series_std: np.ndarray

    @property
    def flagged_channels(self) -> list[int]:
        return [int(i) for i in np.nonzero(self.image_std == 0)[0]]

    @property
    def flagged_variables(self) -> list[int]:
        return [int(i) for i in np.nonzero(self.series_std == 0)[0]]

    def to_dict(self) -> dict:
        return {k: [float(x) for x in v] for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(**{k: np.array(v, dtype=np.float64) for k, v in d.items()})


def fit_norm_stats(records: list[SampleRecord]) -> NormStats:
    if not records:
        raise DataError("cannot fit normalisation statistics on zero records")
    images = np.stack([r.image for r in records]).astype(np.float64)
    series = np.stack([np.where(r.missing, np.nan, r.series) for r in records]).astype(np.float64)
    return NormStats(
        image_mean=images.mean(axis=(0, 2, 3)),
        image_std=images.std(axis=(0, 2, 3)),
        series_mean=np.nanmean(series, axis=(0, 1)),
        series_std=np.nanstd(series, axis=(0, 1)),
    )


def _scale(x: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    safe = np.where(sd > 0, sd, 1.0)  # zero-variance channels are centred only
    return (x - mu) / safe


def normalize(records: list[SampleRecord], stats: NormStats | None = None) -> tuple[list[SampleRecord], NormStats]:
    """Per-channel / per-variable z-scores. Fit ``stats`` on the training split only."""
    if stats is None:
        stats = fit_norm_stats(records)
    out = []
    for r in records:
        image = _scale(r.image.astype(np.float64), stats.image_mean[:, None, None], stats.image_std[:, None, None])
        series = _scale(r.series.astype(np.float64), stats.series_mean, stats.series_std)
        out.append(replace(r, image=image, series=series))
    return out, stats


def slope_percent(elevation: np.ndarray, pixel_size: float = 30.0) -> np.ndarray:
    """Terrain slope (rise over run, in percent) from an elevation grid in metres."""
    dy, dx = np.gradient(elevation, pixel_size)
    return 100.0 * np.hypot(dx, dy)
