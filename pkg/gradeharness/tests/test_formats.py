"""Cube/manifest readers against handcrafted bytes."""

import struct

import numpy as np
import pytest

from gradeharness.cubes import (MAGIC, binary_label, read_cube_file,
                                read_manifest)
from gradeharness.dataset import load_dataset
from gradeharness.errors import DataError

from conftest import make_cohort, write_cube_bytes


def test_cube_round_trip_exact(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.normal(0, 10, (3, 5, 4, 2)).astype(np.float32)
    path = tmp_path / "x.cube"
    write_cube_bytes(path, data, spacing=(1.5, 1.5, 3.0))
    back, spacing = read_cube_file(path)
    assert np.array_equal(back, data)
    assert spacing == (1.5, 1.5, 3.0)


def test_cube_payload_is_channel_major_x_fastest(tmp_path):
    # handcraft the payload so the reader's layout assumption is pinned
    data = np.arange(2 * 2 * 2 * 1, dtype=np.float32).reshape(2, 2, 2, 1)
    header = MAGIC + struct.pack("<4I3f", 2, 2, 2, 1, 1.0, 1.0, 1.0)
    flat = []
    for c in range(2):
        for z in range(1):
            for y in range(2):
                for x in range(2):  # x fastest
                    flat.append(data[c, x, y, z])
    (tmp_path / "h.cube").write_bytes(
        header + np.array(flat, dtype="<f4").tobytes())
    back, _ = read_cube_file(tmp_path / "h.cube")
    assert np.array_equal(back, data)


@pytest.mark.parametrize("mangle,tag", [
    (lambda blob: b"NOTCUBE0" + blob[8:], "cube.magic"),
    (lambda blob: blob[:-4], "cube.size"),
    (lambda blob: blob + b"\x00\x00\x00\x00", "cube.size"),
    (lambda blob: blob[:10], "cube.magic"),
])
def test_cube_malformed(tmp_path, mangle, tag):
    path = tmp_path / "x.cube"
    write_cube_bytes(path, np.zeros((1, 2, 2, 2), dtype=np.float32))
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(DataError) as exc:
        read_cube_file(path)
    assert exc.value.tag == tag


def test_binary_label_collapse():
    assert binary_label("I") == 0
    assert binary_label("II") == 0
    assert binary_label("III") == 1
    with pytest.raises(DataError) as exc:
        binary_label("IV")
    assert exc.value.tag == "manifest.grade"


def test_read_manifest(tmp_path):
    p = tmp_path / "manifest.csv"
    p.write_text("patient_id,grade,cube_path\n"
                 "P000,II,P000.cube\n"
                 "P001,III,sub/P001.cube\n", encoding="utf-8")
    entries = read_manifest(p)
    assert [(e.patient_id, e.grade, e.label) for e in entries] == [
        ("P000", "II", 0), ("P001", "III", 1)]
    assert entries[1].cube_path == "sub/P001.cube"


@pytest.mark.parametrize("text,tag", [
    ("id,grade,path\nP0,II,x.cube\n", "manifest.header"),
    ("patient_id,grade,cube_path\nP0,IV,x.cube\n", "manifest.grade"),
    ("patient_id,grade,cube_path\nP0,II\n", "manifest.columns"),
    ("patient_id,grade,cube_path\nP0,II,a.cube\nP0,III,b.cube\n",
     "manifest.duplicate-id"),
    ("", "manifest.header"),
])
def test_read_manifest_malformed(tmp_path, text, tag):
    p = tmp_path / "manifest.csv"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(DataError) as exc:
        read_manifest(p)
    assert exc.value.tag == tag


def test_read_manifest_missing_file(tmp_path):
    with pytest.raises(DataError) as exc:
        read_manifest(tmp_path / "absent.csv")
    assert exc.value.tag == "manifest.missing"


def test_load_dataset_counts_and_dims(cohort6):
    ds = load_dataset(cohort6)
    assert len(ds) == 6
    assert ds.class_counts() == {0: 3, 1: 3}
    assert ds.n_channels == 2
    assert ds.dims == (16, 16, 6)
    assert [s.patient_id for s in ds] == [f"P{i:03d}" for i in range(6)]


def test_load_dataset_accepts_desk_scale_dims(tmp_path):
    manifest = make_cohort(tmp_path, 4, dims=(8, 8, 4), n_channels=3)
    ds = load_dataset(manifest)
    assert ds.dims == (8, 8, 4)
    assert ds.n_channels == 3


def test_load_dataset_cohort_mix_counts(tmp_path):
    # class mix with 109 low-grade and 200 high-grade rows
    manifest = make_cohort(tmp_path, 309, dims=(2, 2, 1), n_channels=1,
                           label_of=lambda i: 1 if i < 200 else 0)
    ds = load_dataset(manifest)
    assert ds.class_counts() == {0: 109, 1: 200}


def test_load_dataset_missing_cube_names_patient(tmp_path):
    manifest = make_cohort(tmp_path, 4)
    (tmp_path / "P002.cube").unlink()
    with pytest.raises(DataError) as exc:
        load_dataset(manifest)
    assert exc.value.tag == "dataset.missing-cube"
    assert "P002" in str(exc.value)


def test_load_dataset_shape_mismatch(tmp_path):
    manifest = make_cohort(tmp_path, 4)
    write_cube_bytes(tmp_path / "P001.cube",
                     np.zeros((2, 8, 8, 4), dtype=np.float32))
    with pytest.raises(DataError) as exc:
        load_dataset(manifest)
    assert exc.value.tag == "dataset.shape-mismatch"


def test_load_dataset_single_class_rejected(tmp_path):
    manifest = make_cohort(tmp_path, 4, label_of=lambda i: 1)
    with pytest.raises(DataError) as exc:
        load_dataset(manifest)
    assert exc.value.tag == "dataset.single-class"


def test_load_dataset_too_small(tmp_path):
    manifest = make_cohort(tmp_path, 2)
    (tmp_path / "P001.cube").unlink()
    manifest.write_text("patient_id,grade,cube_path\nP000,II,P000.cube\n",
                        encoding="utf-8")
    with pytest.raises(DataError) as exc:
        load_dataset(manifest)
    assert exc.value.tag == "dataset.too-small"


def test_load_dataset_explicit_cube_dir(tmp_path):
    cubes = tmp_path / "cubes"
    cubes.mkdir()
    manifest = make_cohort(cubes, 4)
    moved = tmp_path / "manifest.csv"
    moved.write_text(manifest.read_text(), encoding="utf-8")
    ds = load_dataset(moved, cube_dir=cubes)
    assert len(ds) == 4
