"""Cohort manifest: patient ids, histological grades and cube locations.

CSV with header ``patient_id,grade,cube_path``.  Grades I and II collapse
to binary label 0, grade III to label 1; the label column is derived, never
stored.  ``cube_path`` points at whatever artifact the stage produced: a
per-patient acquisition directory after phantom generation, a ``.cube``
file after fusion/export.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

GRADES = ("I", "II", "III")
SCHEMA_VERSION = 1
_HEADER = ["patient_id", "grade", "cube_path"]


def binary_label(grade: str) -> int:
    """Grade I/II -> 0, grade III -> 1."""
    if grade not in GRADES:
        raise ValidationError(f"unknown grade {grade!r} (expected I, II or III)",
                              tag="manifest.grade")
    return 1 if grade == "III" else 0


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    grade: str
    cube_path: str

    @property
    def binary_label(self) -> int:
        return binary_label(self.grade)


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple[ManifestRow, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        rows = tuple(self.rows)
        seen = {}
        for i, row in enumerate(rows):
            binary_label(row.grade)  # re-validate, rows may come from anywhere
            if row.patient_id in seen:
                raise ValidationError(
                    f"duplicate patient_id {row.patient_id!r} (rows {seen[row.patient_id]} "
                    f"and {i})", tag="manifest.duplicate-id")
            seen[row.patient_id] = i
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def class_counts(self) -> dict[int, int]:
        counts = {0: 0, 1: 0}
        for row in self.rows:
            counts[row.binary_label] += 1
        return counts

    def row_for(self, patient_id: str) -> ManifestRow:
        for row in self.rows:
            if row.patient_id == patient_id:
                return row
        raise ValidationError(f"patient {patient_id!r} not in manifest",
                              tag="manifest.missing-id")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty manifest", tag="manifest.header") from None
        if header != _HEADER:
            raise ValidationError(f"{path}: header {header} != {_HEADER}",
                                  tag="manifest.header")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 columns, got {len(rec)}",
                                      tag="manifest.columns")
            pid, grade, cube_path = (c.strip() for c in rec)
            if grade not in GRADES:
                raise ValidationError(f"{path}:{lineno}: unknown grade {grade!r}",
                                      tag="manifest.grade")
            rows.append(ManifestRow(pid, grade, cube_path))
    try:
        return DatasetManifest(tuple(rows))
    except ValidationError as err:
        raise ValidationError(f"{path}: {err.args[0]}", tag=err.tag) from None


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        for row in manifest.rows:
            writer.writerow([row.patient_id, row.grade, row.cube_path])
