"""Dataset container: ``<stem>.json`` manifest plus ``<stem>.bin`` blob.

The blob concatenates the sections listed under ``sections`` in the
manifest, each little-endian and row-major:

    labels   <f8  (n,)            normalized labels
    cells    |i1  (n, L, H, W)    +1 cracked, -1 intact, 0 empty
    ids      <i8  (n,)            source instance ids
    sources  |u1  (n,)            0 for D0, k for Dk
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .lattice import CoreGeometry

DATASET_FORMAT = "surrolab-dataset/1"


class ContainerError(ValueError):
    pass


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def _sections(ds: Dataset):
    sources = np.array([int(s[1:]) for s in ds.sources], dtype=np.uint8)
    return [
        ("labels", ds.labels.astype("<f8")),
        ("cells", ds.cells.astype("i1")),
        ("ids", ds.ids.astype("<i8")),
        ("sources", sources),
    ]


def save_dataset(ds: Dataset, path) -> tuple[Path, Path]:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    sections = _sections(ds)
    blob = b"".join(arr.tobytes() for _, arr in sections)
    manifest = {
        "format": DATASET_FORMAT,
        "tag": ds.tag,
        "count": len(ds),
        "geometry": ds.geometry.to_dict(),
        "norm": {"raw_min": ds.norm[0], "raw_max": ds.norm[1]},
        "sections": [
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)} for name, arr in sections
        ],
        "blob": stem.name + ".bin",
        "checksum": {"algorithm": "sha256", "value": hashlib.sha256(blob).hexdigest()},
    }
    json_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    bin_path.write_bytes(blob)
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return json_path, bin_path


def load_dataset(path) -> Dataset:
    stem = _stem(path)
    manifest = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("format") != DATASET_FORMAT:
        raise ContainerError(f"unknown dataset format {manifest.get('format')!r}")
    blob = (stem.parent / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["checksum"]["value"]:
        raise ContainerError(f"checksum mismatch in {stem}.bin")
    arrays = {}
    offset = 0
    for sec in manifest["sections"]:
        dtype = np.dtype(sec["dtype"])
        count = int(np.prod(sec["shape"]))
        arrays[sec["name"]] = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(sec["shape"])
        offset += dtype.itemsize * count
    if offset != len(blob):
        raise ContainerError("blob length does not match manifest")
    if len(arrays["labels"]) != manifest["count"]:
        raise ContainerError("count does not match stored labels")
    norm = manifest["norm"]
    return Dataset(
        CoreGeometry.from_dict(manifest["geometry"]),
        arrays["cells"].copy(),
        arrays["labels"].astype(np.float64),
        (norm["raw_min"], norm["raw_max"]),
        manifest["tag"],
        arrays["ids"].astype(np.int64),
        np.array([f"D{int(s)}" for s in arrays["sources"]]),
    )


def checksum(path) -> str:
    return json.loads(_stem(path).with_suffix(".json").read_text(encoding="utf-8"))["checksum"]["value"]
