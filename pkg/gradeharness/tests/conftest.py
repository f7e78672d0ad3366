"""Shared cube-writing helpers: build separable phantom cohorts on disk."""

import struct

import numpy as np
import pytest

MAGIC = b"CDCUBE01"


def write_cube_bytes(path, data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.float32)
    c, nx, ny, nz = data.shape
    header = MAGIC + struct.pack("<4I3f", c, nx, ny, nz, *spacing)
    payload = np.concatenate([data[i].ravel(order="F") for i in range(c)])
    path.write_bytes(header + np.ascontiguousarray(payload, dtype="<f4").tobytes())


def separable_cube(rng, dims, n_channels, label, contrast=2.0):
    """Noise everywhere; channel 0 carries a center blob shifted by class."""
    data = rng.normal(0.0, 0.3, (n_channels,) + tuple(dims)).astype(np.float32)
    sl = tuple(slice(d // 4, d - d // 4) for d in dims)
    data[(0,) + sl] += contrast * (2 * label - 1)
    return data


def grade_for(i, label):
    # alternate I and II inside class 0 so the label collapse gets exercised
    return "III" if label == 1 else ("I" if i % 4 == 0 else "II")


def make_cohort(root, n, dims=(16, 16, 6), n_channels=2, seed=0, contrast=2.0,
                label_of=None):
    """Write n cubes + manifest.csv under root; returns the manifest path."""
    rng = np.random.default_rng(seed)
    rows = ["patient_id,grade,cube_path"]
    for i in range(n):
        label = label_of(i) if label_of is not None else i % 2
        pid = f"P{i:03d}"
        write_cube_bytes(root / f"{pid}.cube",
                         separable_cube(rng, dims, n_channels, label, contrast))
        rows.append(f"{pid},{grade_for(i, label)},{pid}.cube")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest


@pytest.fixture()
def cohort6(tmp_path):
    return make_cohort(tmp_path, 6)
