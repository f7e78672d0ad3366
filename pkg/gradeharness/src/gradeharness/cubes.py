"""Readers for the upstream cube/manifest formats, implemented from scratch.

A cube file is ``CDCUBE01`` followed by a little-endian header
``(n_channels, nx, ny, nz) as uint32, (sx, sy, sz) as float32`` and one
float32 payload per channel in Fortran (x-fastest) voxel order.  The
cohort manifest is a CSV ``patient_id,grade,cube_path`` with grades
I/II/III; grades I and II collapse to binary label 0, grade III to 1.
Cube paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"CDCUBE01"
_HDR = struct.Struct("<4I3f")
_MANIFEST_HEADER = ["patient_id", "grade", "cube_path"]
GRADES = ("I", "II", "III")


def binary_label(grade: str) -> int:
    if grade not in GRADES:
        raise DataError(f"unknown grade {grade!r} (expected I, II or III)",
                        tag="manifest.grade")
    return 1 if grade == "III" else 0


def read_cube_file(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Return ``(data, spacing)`` with data shaped (n_channels, nx, ny, nz)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + _HDR.size or blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a cube file", tag="cube.magic")
    n_channels, nx, ny, nz, sx, sy, sz = _HDR.unpack_from(blob, len(MAGIC))
    expected = len(MAGIC) + _HDR.size + 4 * n_channels * nx * ny * nz
    if len(blob) != expected:
        raise DataError(f"{path}: {len(blob)} bytes, header implies {expected}",
                        tag="cube.size")
    flat = np.frombuffer(blob, dtype="<f4", offset=len(MAGIC) + _HDR.size)
    data = np.stack([chan.reshape((nx, ny, nz), order="F")
                     for chan in flat.reshape(n_channels, -1)])
    return data, (float(sx), float(sy), float(sz))


@dataclass(frozen=True)
class ManifestEntry:
    patient_id: str
    grade: str
    cube_path: str

    @property
    def label(self) -> int:
        return binary_label(self.grade)


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}", tag="manifest.missing")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _MANIFEST_HEADER:
            raise DataError(f"{path}: header {header} != {_MANIFEST_HEADER}",
                            tag="manifest.header")
        entries = []
        seen = set()
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(rec)}",
                                tag="manifest.columns")
            pid, grade, cube_path = (c.strip() for c in rec)
            binary_label(grade)  # validates the grade
            if pid in seen:
                raise DataError(f"{path}:{lineno}: duplicate patient_id {pid!r}",
                                tag="manifest.duplicate-id")
            seen.add(pid)
            entries.append(ManifestEntry(pid, grade, cube_path))
    return entries
