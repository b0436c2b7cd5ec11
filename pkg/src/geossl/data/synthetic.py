"""Planted-correlation synthetic world.

A smooth latent field ``z`` drives the soil spectrum and vegetation cover in
the imagery, the seasonal amplitude and trend of every climate variable
(optionally its level too), and the SOC label.  Each modality also carries
its own independent nuisance (image brightness and land use; per-cell
climate offsets), so the
information the two branches share is ``z`` plus terrain, which is exactly
what cross-modal pretraining can pick up.
"""
from __future__ import annotations

import json

from dataclasses import asdict, dataclass, field

import numpy as np

from ..config import CHANNEL_NAMES, CLIMATE_NAMES
from .features import (BARELAND, BUILT_UP, CROPLAND, FOREST, GRASSLAND, WATER, compute_indices,
                       extract_patch, landcover_filter, modal_class, slope_percent)
from .records import MINERAL_SOC_CAP, MODES, DataError, Dataset, SampleRecord

# reflectance spectra, bands B1..B7
SOIL = np.array([0.09, 0.11, 0.15, 0.21, 0.28, 0.35, 0.31])
VEGETATION = np.array([0.03, 0.05, 0.09, 0.05, 0.45, 0.24, 0.12])
WATER_SPECTRUM = np.array([0.07, 0.08, 0.06, 0.04, 0.02, 0.01, 0.01])
URBAN_SPECTRUM = np.array([0.16, 0.18, 0.20, 0.22, 0.25, 0.27, 0.25])

# per climate variable: base, scale, seasonal phase, latent-level weight, elevation weight
CLIMATE_SHAPE = {
    "tmmn": (4.0, 5.0, 0.0, 0.6, -0.8),
    "tmmx": (0.0, 0.0, 0.0, 0.0, 0.0),  # derived from tmmn
    "vpd": (0.9, 0.35, 0.3, -0.5, -0.3),
    "pr": (60.0, 22.0, 2.8, 0.7, 0.4),
    "srad": (170.0, 55.0, -0.2, -0.4, 0.2),
    "aet": (45.0, 18.0, 0.2, 0.6, 0.1),
    "pdsi": (0.0, 1.5, 1.0, 0.8, 0.0),
    "def": (30.0, 14.0, 0.5, -0.7, -0.2),
    "pet": (80.0, 30.0, 0.1, -0.3, -0.4),
    "vap": (1.0, 0.3, 0.0, 0.5, -0.5),
    "soil": (90.0, 30.0, 2.0, 0.8, 0.2),
}
NON_NEGATIVE = ("vpd", "pr", "srad", "aet", "def", "pet", "vap", "soil")


@dataclass(frozen=True)
class WorldParams:
    size: int = 256
    patch: int = 16
    coarse: int = 8            # climate cell = coarse x coarse image pixels
    months: int = 72
    n_labeled: int = 200
    n_unlabeled: int = 5000
    mode: str = "lucas-like"
    noise: float = 1.0         # label noise multiplier; 0 makes SOC an exact function of the latents
    image_noise: float = 1.0   # image nuisance multiplier
    climate_noise: float = 1.0 # climate nuisance multiplier
    climate_level: float = 0.0 # weight of the latent on climate means (amplitude and trend always carry it)
    amplitude: float = 0.3     # seasonal-amplitude gain per unit latent
    missing_frac: float = 0.02
    irrelevant_frac: float = 0.06
    n_bumps: int = 40
    bump_scale: tuple[float, float] = (14.0, 40.0)

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown dataset mode {self.mode!r}")
        if self.size % self.coarse:
            raise DataError(f"world size {self.size} is not a multiple of the climate cell {self.coarse}")
        if self.patch > self.size:
            raise DataError("patch larger than the world")
        if min(self.n_labeled, self.n_unlabeled) < 0:
            raise DataError("sample counts must be non-negative")


@dataclass
class SyntheticWorld:
    params: WorldParams
    seed: int
    raster: np.ndarray            # [14, H, W] float32
    landcover: np.ndarray         # [H, W] class codes
    climate: np.ndarray           # [11, months, Hc, Wc] float32, NaN where missing
    climate_missing: np.ndarray   # same shape, bool
    labeled: list[SampleRecord]
    unlabeled: list[SampleRecord]
    latent: dict[str, np.ndarray] = field(default_factory=dict)

    def __iter__(self):
        yield from (self.raster, self.climate, self.labeled, self.unlabeled)

    def to_dataset(self) -> Dataset:
        # JSON-normalised (tuples become lists) so the manifest round-trips unchanged
        generator = json.loads(json.dumps(
            {"name": "planted-correlation", "seed": self.seed, "params": asdict(self.params)}))
        return Dataset(self.labeled + self.unlabeled, self.params.mode, self.params.patch,
                       self.params.months, CHANNEL_NAMES, CLIMATE_NAMES, generator)


def smooth_field(rng: np.random.Generator, size: int, n_bumps: int, scale: tuple[float, float]) -> np.ndarray:
    """Standardised sum of random Gaussian bumps."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    f = np.zeros((size, size))
    for _ in range(n_bumps):
        cy, cx = rng.uniform(-0.1 * size, 1.1 * size, 2)
        s = rng.uniform(*scale)
        f += rng.normal() * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return (f - f.mean()) / (f.std() + 1e-12)


def block_mean(a: np.ndarray, k: int) -> np.ndarray:
    H, W = a.shape
    return a.reshape(H // k, k, W // k, k).mean(axis=(1, 3))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _irrelevant_mask(rng, size, frac):
    """Discs of water and built-up land covering roughly ``frac`` of the world."""
    yy, xx = np.mgrid[0:size, 0:size]
    cover = np.full((size, size), -1)
    target = frac * size * size
    while (cover >= 0).sum() < target:
        cy, cx = rng.integers(0, size, 2)
        r = rng.uniform(6, 14)
        disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        cover[disc & (cover < 0)] = WATER if rng.random() < 0.5 else BUILT_UP
    return cover


def gen_raster(rng, p: WorldParams, z, elev_std):
    n = p.size
    brightness = 1.0 + 0.18 * p.image_noise * smooth_field(rng, n, p.n_bumps, p.bump_scale)
    land_use = 1.2 * p.image_noise * smooth_field(rng, n, p.n_bumps, p.bump_scale)
    veg = _sigmoid(0.9 * z + land_use + 0.3 * p.image_noise * rng.normal(size=(n, n)))
    darkening = 1.0 - 0.35 * _sigmoid(1.5 * z)   # organic matter darkens bare soil
    soil = SOIL[:, None, None] * darkening
    refl = brightness * ((1.0 - veg) * soil + veg * VEGETATION[:, None, None])
    refl = refl * (1.0 + 0.04 * p.image_noise * rng.normal(size=refl.shape))

    irrelevant = _irrelevant_mask(rng, n, p.irrelevant_frac)
    for cls, spectrum in ((WATER, WATER_SPECTRUM), (BUILT_UP, URBAN_SPECTRUM)):
        m = irrelevant == cls
        refl[:, m] = spectrum[:, None] * (1.0 + 0.05 * rng.normal(size=(7, int(m.sum()))))
    bands = np.clip(refl, 1e-3, 1.0).astype(np.float32)

    landcover = np.select([veg > 0.7, veg > 0.45, veg < 0.15], [FOREST, GRASSLAND, BARELAND], CROPLAND)
    landcover = np.where(irrelevant >= 0, irrelevant, landcover)

    indices, _ = compute_indices(bands)
    elevation = (400.0 + 300.0 * elev_std).astype(np.float32)
    slope = slope_percent(elevation.astype(np.float64))
    raster = np.concatenate([bands, indices.astype(np.float32), elevation[None], slope[None].astype(np.float32)])
    return raster, landcover.astype(np.int64)


def gen_climate(rng, p: WorldParams, z_c, e_c):
    nc = z_c.shape[0]
    months = np.arange(p.months)[:, None, None]
    trend = months / max(p.months - 1, 1) - 0.5
    out = np.zeros((len(CLIMATE_NAMES), p.months, nc, nc))
    for v, name in enumerate(CLIMATE_NAMES):
        base, scale, phase, w_z, w_e = CLIMATE_SHAPE[name]
        if name == "tmmx":
            spread = 9.0 + 1.5 * z_c + 0.5 * p.climate_noise * rng.normal(size=z_c.shape)
            out[v] = out[0] + np.maximum(spread, 0.5)
            continue
        offset = 0.6 * p.climate_noise * rng.normal(size=z_c.shape)   # independent nuisance
        season = (1.0 + p.amplitude * z_c) * np.sin(2 * np.pi * months / 12 + phase)
        signal = p.climate_level * w_z * z_c + w_e * e_c + season + 0.8 * z_c * trend + offset
        signal = signal + 0.25 * p.climate_noise * rng.normal(size=signal.shape)
        out[v] = base + scale * signal
        if name in NON_NEGATIVE:
            out[v] = np.maximum(out[v], 0.0)
    climate = out.astype(np.float32)

    missing = rng.random(climate.shape) < p.missing_frac
    # every (variable, cell) keeps at least two observed months for imputation
    short = (~missing).sum(axis=1) < 2
    missing &= ~short[:, None]
    climate[missing] = np.nan
    return climate, missing


def soc_label(rng, p: WorldParams, z: float, e: float) -> float:
    s = 0.85 * z + 0.25 * e
    if p.mode == "lucas-like":
        return max(30.0 + 13.0 * s + 5.0 * p.noise * rng.normal(), 0.1)
    return float(np.exp(4.45 + 1.0 * s + 0.35 * p.noise * rng.normal()))


def gen_synthetic_world(seed: int = 0, params: WorldParams | None = None) -> SyntheticWorld:
    p = params or WorldParams()
    rng = np.random.default_rng(seed)
    z = smooth_field(rng, p.size, p.n_bumps, p.bump_scale)
    elev = smooth_field(rng, p.size, p.n_bumps // 2, (2 * p.bump_scale[0], 2 * p.bump_scale[1]))
    raster, landcover = gen_raster(rng, p, z, elev)
    z_c, e_c = block_mean(z, p.coarse), block_mean(elev, p.coarse)
    climate, missing = gen_climate(rng, p, z_c, e_c)

    half = p.patch // 2
    lo, hi = half, p.size - (p.patch - half)
    side = hi - lo + 1
    need = p.n_labeled + p.n_unlabeled
    records: list[SampleRecord] = []
    for flat in rng.permutation(side * side):
        if len(records) == need:
            break
        r, c = lo + flat // side, lo + flat % side
        lc = extract_patch(landcover, (r, c), p.patch)
        if not landcover_filter(lc):
            continue
        soc = None
        if len(records) < p.n_labeled:
            soc = soc_label(rng, p, z[r, c], elev[r, c])
            if p.mode == "lucas-like" and soc >= MINERAL_SOC_CAP:
                continue
        rc, cc = r // p.coarse, c // p.coarse
        records.append(SampleRecord(
            location_id=len(records), row=int(r), col=int(c),
            image=extract_patch(raster, (r, c), p.patch).astype(np.float64),
            series=climate[:, :, rc, cc].T.astype(np.float64),
            missing=missing[:, :, rc, cc].T.copy(),
            soc=None if soc is None else float(np.float32(soc)),
            landcover=lc, landcover_majority=modal_class(lc),
        ))
    if len(records) < need:
        raise DataError(f"world holds only {len(records)} usable locations, {need} requested")
    latent = {"z": z, "elevation": elev, "z_coarse": z_c}
    return SyntheticWorld(p, seed, raster, landcover, climate, missing,
                          records[:p.n_labeled], records[p.n_labeled:], latent)
