"""In-memory dataset assembly from a cohort manifest plus cube files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cubes import read_cube_file, read_manifest
from .errors import DataError


@dataclass(frozen=True)
class Sample:
    patient_id: str
    grade: str
    label: int
    data: np.ndarray  # float32, (n_channels, nx, ny, nz)


@dataclass(frozen=True)
class CubeDataset:
    samples: tuple[Sample, ...]

    @property
    def n_channels(self) -> int:
        return self.samples[0].data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.samples[0].data.shape[1:])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def class_counts(self) -> dict[int, int]:
        labels = self.labels
        return {0: int((labels == 0).sum()), 1: int((labels == 1).sum())}

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def load_dataset(manifest_path, cube_dir=None) -> CubeDataset:
    """Read every manifest row's cube; dims/channel counts must agree.

    ``cube_dir`` defaults to the manifest's own directory, matching how the
    upstream exporter lays out ``manifest.csv`` next to the ``.cube`` files.
    """
    manifest_path = Path(manifest_path)
    base = Path(cube_dir) if cube_dir is not None else manifest_path.parent
    entries = read_manifest(manifest_path)
    if len(entries) < 2:
        raise DataError(f"need at least 2 patients, manifest has {len(entries)}",
                        tag="dataset.too-small")

    samples = []
    shape = None
    for entry in entries:
        cube_path = base / entry.cube_path
        if not cube_path.is_file():
            raise DataError(f"patient {entry.patient_id}: cube file "
                            f"{entry.cube_path!r} not found under {base}",
                            tag="dataset.missing-cube")
        data, _ = read_cube_file(cube_path)
        if shape is None:
            shape = data.shape
        elif data.shape != shape:
            raise DataError(f"patient {entry.patient_id}: cube shape {data.shape} "
                            f"differs from first cube {shape}",
                            tag="dataset.shape-mismatch")
        samples.append(Sample(entry.patient_id, entry.grade, entry.label, data))

    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise DataError(f"need both classes present, got labels {sorted(labels)}",
                        tag="dataset.single-class")
    return CubeDataset(tuple(samples))
