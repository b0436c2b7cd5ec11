"""Manifest-plus-blobs directory container.

Layout::

    <dir>/manifest            JSON, sorted keys, 2-space indent, LF
    <dir>/blobs/<name>.f32    uint64 LE element count, then little-endian float32 data
    <dir>/blobs/<name>.f64    same, float64 (checkpoints)

Each blob's SHA-256 (over the whole file, header included), dtype and shape
are recorded in the manifest.  The manifest is written last.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .records import DataError

FORMAT_VERSION = 1
_DTYPES = {"<f4": ".f32", "<f8": ".f64"}


class ChecksumError(DataError):
    pass


class VersionError(DataError):
    pass


class TruncatedBlobError(DataError):
    pass


def encode_blob(array: np.ndarray, dtype: str) -> bytes:
    arr = np.ascontiguousarray(array, dtype=np.dtype(dtype))
    return struct.pack("<Q", arr.size) + arr.tobytes(order="C")


def decode_blob(name: str, raw: bytes, dtype: str, shape: list[int]) -> np.ndarray:
    if len(raw) < 8:
        raise TruncatedBlobError(f"blob {name!r}: missing length header")
    (count,) = struct.unpack("<Q", raw[:8])
    itemsize = np.dtype(dtype).itemsize
    if len(raw) - 8 != count * itemsize:
        raise TruncatedBlobError(f"blob {name!r}: header declares {count} values, "
                                 f"payload holds {(len(raw) - 8) / itemsize:g}")
    if count != int(np.prod(shape, dtype=np.int64)):
        raise DataError(f"blob {name!r}: {count} values do not fill shape {shape}")
    return np.frombuffer(raw[8:], dtype=np.dtype(dtype)).reshape(shape).copy()


def dump_manifest(manifest: dict) -> bytes:
    return (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode()


def write_container(path: str | os.PathLike, meta: dict, arrays: dict[str, tuple[np.ndarray, str]]) -> dict:
    """Write ``arrays`` (name -> (array, dtype)) and a manifest carrying ``meta``."""
    root = Path(path)
    (root / "blobs").mkdir(parents=True, exist_ok=True)
    blobs = {}
    for name, (array, dtype) in arrays.items():
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported blob dtype {dtype}")
        raw = encode_blob(array, dtype)
        fname = f"blobs/{name}{_DTYPES[dtype]}"
        (root / fname).write_bytes(raw)
        blobs[name] = {"file": fname, "dtype": dtype, "shape": [int(s) for s in np.shape(array)],
                       "sha256": hashlib.sha256(raw).hexdigest()}
    manifest = dict(meta)
    manifest.update({"version": FORMAT_VERSION, "byte_order": "little", "blobs": blobs})
    (root / "manifest").write_bytes(dump_manifest(manifest))
    return manifest


def read_container(path: str | os.PathLike, expected_format: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    root = Path(path)
    mpath = root / "manifest"
    if not mpath.is_file():
        raise DataError(f"{root}: no manifest")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{mpath}: unreadable manifest ({exc})") from None
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionError(f"{root}: container version {manifest.get('version')!r}, expected {FORMAT_VERSION}")
    if expected_format is not None and manifest.get("format") != expected_format:
        raise DataError(f"{root}: is a {manifest.get('format')!r} container, expected {expected_format!r}")
    arrays = {}
    for name, info in manifest["blobs"].items():
        fpath = root / info["file"]
        if not fpath.is_file():
            raise DataError(f"blob {name!r} is missing ({fpath})")
        raw = fpath.read_bytes()
        if hashlib.sha256(raw).hexdigest() != info["sha256"]:
            decode_blob(name, raw, info["dtype"], info["shape"])  # truncation gets its own error
            raise ChecksumError(f"blob {name!r}: checksum mismatch")
        arrays[name] = decode_blob(name, raw, info["dtype"], info["shape"])
    return manifest, arrays


def directory_checksum(path: str | os.PathLike) -> str:
    """SHA-256 over every file in the container, in sorted path order."""
    root = Path(path)
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()
