"""File-format round trips and failure tags for every reader/writer."""

import struct

import numpy as np
import pytest

from cdiskit.cube import MAGIC as CUBE_MAGIC
from cdiskit.cube import STANDARD_DIMS, StandardCube, read_cube, write_cube
from cdiskit.errors import (CorruptionError, DataError, ParseError, TruncatedFileError,
                            UnsupportedFormatError, ValidationError)
from cdiskit.manifest import (DatasetManifest, ManifestRow, binary_label, read_manifest,
                              write_manifest)
from cdiskit.nifti import read_nifti, write_nifti
from cdiskit.stackio import (channel_filename, read_mask, read_patient, read_stack,
                             write_mask, write_stack)
from cdiskit.volume import NATIVE, SYNTHETIC, DwiStack, MaskVolume, Volume3D


def _random_volume(rng, dims=(7, 5, 3), spacing=(1.5, 1.5, 3.0)):
    data = rng.normal(size=dims).astype(np.float32)
    return Volume3D(data, spacing, affine_bytes=bytes(rng.integers(0, 256, 76, dtype=np.uint8)))


# ---------------------------------------------------------------- NIfTI


def test_nifti_float32_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    for k in range(20):
        dims = tuple(int(d) for d in rng.integers(1, 9, 3))
        if min(dims) < 1:
            continue
        vol = _random_volume(rng, dims)
        path = tmp_path / f"v{k}.nii"
        write_nifti(vol, path)
        back = read_nifti(path)
        assert back.data.dtype == np.float32
        assert back.data.tobytes() == vol.data.astype(np.float32).tobytes()
        assert back.dims == vol.dims
        assert back.spacing == pytest.approx(vol.spacing)
        assert back.affine_bytes == vol.affine_bytes


def test_nifti_write_read_write_is_stable(tmp_path):
    # second generation must be byte-identical to the first
    vol = _random_volume(np.random.default_rng(3))
    p1, p2 = tmp_path / "a.nii", tmp_path / "b.nii"
    write_nifti(vol, p1)
    write_nifti(read_nifti(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def _raw_nifti(dims, datatype, payload, scl=(0.0, 0.0), pixdim=(1.0, 1.0, 1.0),
               magic=b"n+1\x00", sizeof=348, vox_offset=352.0, ndim=3, dim4=1):
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, sizeof)
    struct.pack_into("<8h", hdr, 40, ndim, dims[0], dims[1], dims[2], dim4, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, datatype, {4: 16, 16: 32}.get(datatype, 0))
    struct.pack_into("<8f", hdr, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, vox_offset)
    struct.pack_into("<2f", hdr, 112, *scl)
    hdr[344:348] = magic
    return bytes(hdr) + b"\x00" * 4 + payload


def test_nifti_int16_with_scaling(tmp_path):
    raw = np.arange(-4, 4, dtype="<i2")
    blob = _raw_nifti((2, 2, 2), 4, raw.tobytes(), scl=(2.5, 10.0))
    path = tmp_path / "i16.nii"
    path.write_bytes(blob)
    vol = read_nifti(path)
    expected = raw.astype(np.float32) * np.float32(2.5) + np.float32(10.0)
    assert np.array_equal(vol.flat(), expected)


def test_nifti_int16_zero_slope_means_unscaled(tmp_path):
    raw = np.arange(8, dtype="<i2")
    path = tmp_path / "raw.nii"
    path.write_bytes(_raw_nifti((2, 2, 2), 4, raw.tobytes(), scl=(0.0, 99.0)))
    assert np.array_equal(read_nifti(path).flat(), raw.astype(np.float32))


def test_nifti_accepts_4d_single_timepoint(tmp_path):
    payload = np.zeros(8, dtype="<f4").tobytes()
    path = tmp_path / "t1.nii"
    path.write_bytes(_raw_nifti((2, 2, 2), 16, payload, ndim=4, dim4=1))
    assert read_nifti(path).dims == (2, 2, 2)


@pytest.mark.parametrize("mutate, err, tag", [
    (dict(magic=b"ni1\x00"), ParseError, "nifti.magic"),
    (dict(sizeof=1024), ParseError, "nifti.sizeof_hdr"),
    (dict(dtype_code=64), UnsupportedFormatError, "nifti.datatype"),
    (dict(ndim=4, dim4=3), UnsupportedFormatError, "nifti.dim"),
    (dict(ndim=2), UnsupportedFormatError, "nifti.dim"),
    (dict(vox_offset=100.0), ParseError, "nifti.vox_offset"),
])
def test_nifti_rejects_malformed_headers(tmp_path, mutate, err, tag):
    payload = np.zeros(8, dtype="<f4").tobytes()
    path = tmp_path / "bad.nii"
    dtype_code = mutate.pop("dtype_code", 16)
    path.write_bytes(_raw_nifti((2, 2, 2), dtype_code, payload, **mutate))
    with pytest.raises(err) as exc:
        read_nifti(path)
    assert exc.value.tag == tag


def test_nifti_truncation_reports_byte_counts(tmp_path):
    vol = _random_volume(np.random.default_rng(0), dims=(4, 4, 4))
    path = tmp_path / "cut.nii"
    write_nifti(vol, path)
    whole = path.read_bytes()
    path.write_bytes(whole[:-10])
    with pytest.raises(TruncatedFileError) as exc:
        read_nifti(path)
    assert exc.value.tag == "nifti.truncated"
    assert exc.value.expected == 4 * 4 * 4 * 4
    assert exc.value.actual == exc.value.expected - 10

    path.write_bytes(whole[:100])  # shorter than the header itself
    with pytest.raises(TruncatedFileError):
        read_nifti(path)


def test_nifti_rejects_nonfinite_payload(tmp_path):
    payload = np.full(8, np.nan, dtype="<f4").tobytes()
    path = tmp_path / "nan.nii"
    path.write_bytes(_raw_nifti((2, 2, 2), 16, payload))
    with pytest.raises(ValidationError) as exc:
        read_nifti(path)
    assert exc.value.tag == "volume.nonfinite"


# ---------------------------------------------------------------- raw cube


def test_cube_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.random((3, 6, 5, 4)).astype(np.float32)
    cube = StandardCube("P007", ["cdis", "dwi_b800", "extra"], data, (1.5, 1.5, 3.0))
    path = tmp_path / "P007.cube"
    write_cube(cube, path)
    back = read_cube(path, channel_names=cube.channels)
    assert back.patient_id == "P007"
    assert back.channels == cube.channels
    assert back.data.tobytes() == cube.data.tobytes()
    assert back.spacing == cube.spacing
    write_cube(back, tmp_path / "again.cube")
    assert (tmp_path / "again.cube").read_bytes() == path.read_bytes()


def test_cube_payload_is_channel_major_x_fastest(tmp_path):
    data = np.arange(2 * 2 * 3 * 2, dtype=np.float32).reshape(2, 2, 3, 2)
    cube = StandardCube("p", ["a", "b"], data)
    path = tmp_path / "p.cube"
    write_cube(cube, path)
    blob = path.read_bytes()
    flat = np.frombuffer(blob[len(CUBE_MAGIC) + 28:], dtype="<f4")
    assert np.array_equal(flat[:12], data[0].ravel(order="F"))
    assert np.array_equal(flat[12:], data[1].ravel(order="F"))


def test_cube_default_names_and_id(tmp_path):
    cube = StandardCube("x", ["only"], np.zeros((1, 2, 2, 2), dtype=np.float32))
    write_cube(cube, tmp_path / "ANON.cube")
    back = read_cube(tmp_path / "ANON.cube")
    assert back.patient_id == "ANON"
    assert back.channels == ("ch0",)


def test_cube_magic_and_size_errors(tmp_path):
    path = tmp_path / "bad.cube"
    path.write_bytes(b"NOTCUBES" + b"\x00" * 64)
    with pytest.raises(ParseError) as exc:
        read_cube(path)
    assert exc.value.tag == "cube.magic"

    path.write_bytes(CUBE_MAGIC + b"\x00" * 4)  # header cut short
    with pytest.raises(ParseError) as exc:
        read_cube(path)
    assert exc.value.tag == "cube.header"

    good = tmp_path / "good.cube"
    write_cube(StandardCube("x", ["a"], np.zeros((1, 2, 2, 2), dtype=np.float32)), good)
    blob = good.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(CorruptionError) as exc:
        read_cube(path)
    assert exc.value.tag == "cube.size-mismatch"


def test_cube_validation():
    ok = np.zeros((2, 2, 2, 2), dtype=np.float32)
    with pytest.raises(ValidationError) as exc:
        StandardCube("x", ["a"], ok)  # 2 channels of data, 1 name
    assert exc.value.tag == "cube.shape"
    with pytest.raises(ValidationError) as exc:
        StandardCube("x", ["a", "a"], ok)
    assert exc.value.tag == "cube.channels"
    bad = ok.copy()
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(ValidationError) as exc:
        StandardCube("x", ["a", "b"], bad)
    assert exc.value.tag == "cube.nonfinite"
    out = ok.copy()
    out[0, 0, 0, 0] = 1.5
    with pytest.raises(ValidationError) as exc:
        StandardCube("x", ["cdis", "b"], out)
    assert exc.value.tag == "cube.cdis-range"
    cube = StandardCube("x", ["cdis", "b"], ok)
    assert not cube.is_standard_dims
    assert StandardCube("y", ["m"], np.zeros((1,) + STANDARD_DIMS,
                                             dtype=np.float32)).is_standard_dims


def test_cube_channel_accessor():
    data = np.stack([np.zeros((2, 2, 2)), np.ones((2, 2, 2))]).astype(np.float32)
    cube = StandardCube("x", ["cdis", "dwi_b800"], data, (2.0, 2.0, 2.0))
    ch = cube.channel("dwi_b800")
    assert np.array_equal(ch.data, np.ones((2, 2, 2), dtype=np.float32))
    assert ch.spacing == (2.0, 2.0, 2.0)
    with pytest.raises(ValidationError):
        cube.channel("nope")


# ---------------------------------------------------------------- manifest


def test_manifest_round_trip_and_labels(tmp_path):
    rows = (ManifestRow("P000", "I", "P000.cube"),
            ManifestRow("P001", "III", "P001.cube"),
            ManifestRow("P002", "II", "P002.cube"))
    manifest = DatasetManifest(rows)
    path = tmp_path / "manifest.csv"
    write_manifest(manifest, path)
    back = read_manifest(path)
    assert back.rows == rows
    assert [r.binary_label for r in back] == [0, 1, 0]
    assert back.class_counts() == {0: 2, 1: 1}
    assert back.row_for("P001").grade == "III"
    write_manifest(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_manifest_grade_collapse():
    assert binary_label("I") == 0
    assert binary_label("II") == 0
    assert binary_label("III") == 1
    with pytest.raises(ValidationError) as exc:
        binary_label("IV")
    assert exc.value.tag == "manifest.grade"


@pytest.mark.parametrize("text, tag", [
    ("", "manifest.header"),
    ("id,grade,path\n", "manifest.header"),
    ("patient_id,grade,cube_path\nP0,II\n", "manifest.columns"),
    ("patient_id,grade,cube_path\nP0,IV,x\n", "manifest.grade"),
    ("patient_id,grade,cube_path\nP0,II,x\nP0,III,y\n", "manifest.duplicate-id"),
])
def test_manifest_rejects_malformed(tmp_path, text, tag):
    path = tmp_path / "m.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ValidationError) as exc:
        read_manifest(path)
    assert exc.value.tag == tag


def test_manifest_missing_patient():
    m = DatasetManifest((ManifestRow("P0", "II", "x"),))
    with pytest.raises(ValidationError) as exc:
        m.row_for("P9")
    assert exc.value.tag == "manifest.missing-id"


# ---------------------------------------------------------------- stack dirs


def _toy_stack(rng, patient_id="P000"):
    dims, spacing = (6, 5, 4), (1.5, 1.5, 3.0)
    vols = tuple(Volume3D(rng.random(dims).astype(np.float32) + 0.5, spacing)
                 for _ in range(3))
    return DwiStack(patient_id, (0.0, 800.0, 1500.0), vols,
                    (NATIVE, NATIVE, SYNTHETIC))


def test_stack_directory_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    stack = _toy_stack(rng)
    mask = MaskVolume((rng.random((6, 5, 4)) > 0.7).astype(np.uint8), (1.5, 1.5, 3.0))
    write_stack(stack, tmp_path / "P000", mask=mask)
    assert (tmp_path / "P000" / "b0000.nii").is_file()
    assert (tmp_path / "P000" / "b0800.nii").is_file()
    assert (tmp_path / "P000" / "s1500.nii").is_file()

    back, back_mask = read_patient(tmp_path / "P000")
    assert back.patient_id == "P000"
    assert back.bvalues == stack.bvalues
    assert back.provenance == stack.provenance
    for v1, v2 in zip(stack.volumes, back.volumes):
        assert v1.data.tobytes() == v2.data.tobytes()
    assert np.array_equal(back_mask.data, mask.data)


def test_read_patient_without_mask(tmp_path):
    stack = _toy_stack(np.random.default_rng(1))
    write_stack(stack, tmp_path / "P001")
    _, mask = read_patient(tmp_path / "P001")
    assert mask is None


def test_stack_reader_sorts_channels_by_b(tmp_path):
    # stack.json listing channels out of order must still load ascending
    stack = _toy_stack(np.random.default_rng(2))
    d = tmp_path / "P002"
    write_stack(stack, d)
    meta = (d / "stack.json").read_text(encoding="utf-8")
    import json
    parsed = json.loads(meta)
    parsed["channels"] = parsed["channels"][::-1]
    (d / "stack.json").write_text(json.dumps(parsed), encoding="utf-8")
    back = read_stack(d)
    assert back.bvalues == (0.0, 800.0, 1500.0)


def test_stack_errors(tmp_path):
    with pytest.raises(DataError) as exc:
        read_stack(tmp_path)
    assert exc.value.tag == "stack.missing-json"

    d = tmp_path / "P003"
    d.mkdir()
    (d / "stack.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        read_stack(d)
    assert exc.value.tag == "stack.bad-json"

    (d / "stack.json").write_text('{"patient_id": "x"}', encoding="utf-8")
    with pytest.raises(DataError) as exc:
        read_stack(d)
    assert exc.value.tag == "stack.bad-json"


def test_mask_file_round_trip_and_validation(tmp_path):
    rng = np.random.default_rng(5)
    mask = MaskVolume((rng.random((4, 4, 2)) > 0.5).astype(np.uint8))
    path = tmp_path / "mask.nii"
    write_mask(mask, path)
    assert np.array_equal(read_mask(path).data, mask.data)

    write_nifti(Volume3D(np.full((2, 2, 2), 0.5, dtype=np.float32)), path)
    with pytest.raises(ValidationError) as exc:
        read_mask(path)
    assert exc.value.tag == "mask.values"


def test_channel_filename_convention():
    assert channel_filename(0, NATIVE) == "b0000.nii"
    assert channel_filename(800, NATIVE) == "b0800.nii"
    assert channel_filename(1500, SYNTHETIC) == "s1500.nii"
    assert channel_filename(62.5, NATIVE) == "b62.5.nii"


# ---------------------------------------------------------------- in-memory types


def test_volume_flat_is_x_fastest():
    data = np.arange(24, dtype=np.float32).reshape((2, 3, 4), order="F")
    vol = Volume3D(data)
    assert np.array_equal(vol.flat(), np.arange(24, dtype=np.float32))
    again = Volume3D.from_flat((2, 3, 4), vol.flat())
    assert np.array_equal(again.data, data)


def test_volume_rejects_bad_input():
    with pytest.raises(ValidationError) as exc:
        Volume3D(np.zeros((2, 2), dtype=np.float32))
    assert exc.value.tag == "volume.dims"
    with pytest.raises(ValidationError) as exc:
        Volume3D(np.zeros((2, 2, 2), dtype=np.int32))
    assert exc.value.tag == "volume.dtype"
    with pytest.raises(ValidationError) as exc:
        Volume3D(np.zeros((2, 2, 2), dtype=np.float32), spacing=(1.0, 0.0, 1.0))
    assert exc.value.tag == "volume.spacing"
    with pytest.raises(ValidationError) as exc:
        Volume3D.from_flat((2, 2, 2), np.zeros(7, dtype=np.float32))
    assert exc.value.tag == "volume.size"


def test_volume_data_is_read_only():
    vol = Volume3D(np.zeros((2, 2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 1.0


def test_mask_rejects_non_binary():
    with pytest.raises(ValidationError) as exc:
        MaskVolume(np.full((2, 2, 2), 2, dtype=np.uint8))
    assert exc.value.tag == "mask.values"


def test_stack_validation():
    vols = tuple(Volume3D(np.ones((2, 2, 2), dtype=np.float32)) for _ in range(2))
    with pytest.raises(ValidationError) as exc:
        DwiStack("p", (800.0, 0.0), vols, (NATIVE, NATIVE))
    assert exc.value.tag == "stack.bvalues"
    with pytest.raises(ValidationError) as exc:
        DwiStack("p", (0.0, 100.0), vols, (NATIVE, NATIVE))
    assert exc.value.tag == "stack.native-coverage"
    with pytest.raises(ValidationError) as exc:
        DwiStack("p", (0.0, 800.0), vols, (NATIVE, "measured"))
    assert exc.value.tag == "stack.provenance"
    mixed = (vols[0], Volume3D(np.ones((3, 2, 2), dtype=np.float32)))
    with pytest.raises(ValidationError) as exc:
        DwiStack("p", (0.0, 800.0), mixed, (NATIVE, NATIVE))
    assert exc.value.tag == "stack.geometry"
