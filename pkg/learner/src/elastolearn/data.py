"""Reading and writing the field container and dataset manifest.

This package talks to the data-generation pipeline exclusively through files:
the "EFD1" binary container (little-endian float32, planar, row-major), 8-bit
binary PGM images, and a JSON-lines manifest. The parsing here is deliberately
self-contained.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"EFD1"


class DataError(ValueError):
    pass


def read_efd(path) -> np.ndarray:
    """Return the planes of an EFD1 file as a float32 array (c, h, w)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise DataError(f"{path}: not an EFD1 file")
    width, height, channels = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * width * height * channels
    if len(raw) != expected:
        raise DataError(f"{path}: payload size mismatch")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(channels, height, width).copy()


def write_efd(planes: np.ndarray, path) -> None:
    planes = np.asarray(planes, dtype="<f4")
    if planes.ndim != 3:
        raise DataError("expected a (channels, height, width) array")
    c, h, w = planes.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", w, h, c))
        fh.write(np.ascontiguousarray(planes).tobytes())


def read_pgm(path) -> np.ndarray:
    """8-bit binary PGM as float32 intensities in [0, 1]."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    raster = parts[4][: width * height]
    if len(raster) != width * height:
        raise DataError(f"{path}: truncated raster")
    return (np.frombuffer(raster, dtype=np.uint8).reshape(height, width) / 255.0).astype(
        np.float32
    )


@dataclass(frozen=True)
class Record:
    id: int
    nu: float
    seed: int
    src: str
    tgt: str
    field: str
    split: str
    registered: str | None = None


def read_manifest(path) -> list[Record]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            records.append(
                Record(
                    d["id"], d["nu"], d["seed"], d["src"], d["tgt"], d["field"],
                    d["split"], d.get("registered"),
                )
            )
    if not records:
        raise DataError(f"{path}: empty manifest")
    return records


def load_pairs(manifest_path, split: str | None = None):
    """(source, target) image stacks plus the records, as float32 arrays."""
    base = Path(manifest_path).parent
    records = [r for r in read_manifest(manifest_path) if split is None or r.split == split]
    sources = np.stack([read_pgm(base / r.src) for r in records])
    targets = np.stack([read_pgm(base / r.tgt) for r in records])
    return sources, targets, records


def load_fields(manifest_path, split: str | None = None, field_dir: str | None = None):
    """Displacement fields (n, 2, h, w) and nu labels.

    field_dir overrides where per-record field files are found (e.g. a
    directory of noise-overlaid copies named <id>.efd written with the
    pipeline's noise command).
    """
    base = Path(manifest_path).parent
    records = [r for r in read_manifest(manifest_path) if split is None or r.split == split]
    fields, labels = [], []
    for r in records:
        path = Path(field_dir) / f"{r.id:05d}.efd" if field_dir else base / r.field
        planes = read_efd(path)
        if planes.shape[0] != 2:
            raise DataError(f"{path}: displacement field needs 2 channels")
        fields.append(planes)
        labels.append(r.nu)
    return np.stack(fields), np.asarray(labels, dtype=np.float32), records
