"""Dataset <-> container mapping."""
from __future__ import annotations

import os

import numpy as np

from ..config import FEATURE_GROUPS
from .container import read_container, write_container
from .records import DataError, Dataset, SampleRecord

DATASET_FORMAT = "geossl-dataset"
_MAX_EXACT_F32_INT = 2 ** 24


def _stack(records, attr, shape, fill=np.nan):
    if not records:
        return np.zeros((0,) + shape, dtype=np.float32)
    return np.stack([np.full(shape, fill) if getattr(r, attr) is None else getattr(r, attr)
                     for r in records]).astype(np.float32)


def write_dataset(path: str | os.PathLike, ds: Dataset) -> dict:
    """Write every record field as float32 blobs.

    Values must be float32-representable for the round trip to be exact;
    generated datasets are.
    """
    recs = ds.records
    ids = [r.location_id for r in recs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate location ids")
    if any(not 0 <= i < _MAX_EXACT_F32_INT for i in ids):
        raise DataError(f"location ids must lie in [0, {_MAX_EXACT_F32_INT})")
    for r in recs:
        if r.soc is not None and (not np.isfinite(r.soc) or r.soc < 0):
            raise DataError(f"record {r.location_id}: invalid SOC label {r.soc}")
    H, L, C, V = ds.image_size, ds.series_length, len(ds.channels), len(ds.variables)
    arrays = {
        "location_id": (np.array(ids, dtype=np.float32), "<f4"),
        "coords": (np.array([[r.row, r.col] for r in recs], dtype=np.float32).reshape(-1, 2), "<f4"),
        "images": (_stack(recs, "image", (C, H, H)), "<f4"),
        "series": (_stack(recs, "series", (L, V)), "<f4"),
        "missing": (_stack(recs, "missing", (L, V), 0.0), "<f4"),
        "soc": (np.array([np.nan if r.soc is None else r.soc for r in recs], dtype=np.float32), "<f4"),
        "landcover": (_stack(recs, "landcover", (H, H), -1.0), "<f4"),
        "landcover_majority": (np.array([r.landcover_majority for r in recs], dtype=np.float32), "<f4"),
    }
    n_lab = sum(r.labeled for r in recs)
    meta = {
        "format": DATASET_FORMAT,
        "mode": ds.mode,
        "counts": {"labeled": n_lab, "unlabeled": len(recs) - n_lab, "total": len(recs)},
        "image_size": H,
        "series_length": L,
        "channels": list(ds.channels),
        "variables": list(ds.variables),
        "toggle_groups": [{"bit": i, "group": g, "members": list(m)} for i, (g, m) in enumerate(FEATURE_GROUPS)],
        "generator": ds.generator,
        "norm_stats": ds.norm_stats,
    }
    return write_container(path, meta, arrays)


def read_dataset(path: str | os.PathLike) -> Dataset:
    manifest, a = read_container(path, DATASET_FORMAT)
    n = manifest["counts"]["total"]
    if a["location_id"].shape[0] != n:
        raise DataError(f"manifest counts {n} records, blobs hold {a['location_id'].shape[0]}")
    records = []
    for i in range(n):
        soc = a["soc"][i]
        lc = a["landcover"][i]
        records.append(SampleRecord(
            location_id=int(a["location_id"][i]),
            row=int(a["coords"][i, 0]),
            col=int(a["coords"][i, 1]),
            image=a["images"][i].astype(np.float64),
            series=a["series"][i].astype(np.float64),
            missing=a["missing"][i].astype(bool),
            soc=None if np.isnan(soc) else float(soc),
            landcover=None if (lc < 0).all() else lc.astype(np.int64),
            landcover_majority=int(a["landcover_majority"][i]),
        ))
    return Dataset(records, manifest["mode"], manifest["image_size"], manifest["series_length"],
                   tuple(manifest["channels"]), tuple(manifest["variables"]),
                   manifest["generator"], manifest["norm_stats"])
