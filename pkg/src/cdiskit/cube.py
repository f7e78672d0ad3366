"""Multi-channel raw-cube container used for the ML handoff.

File layout (little-endian): magic ``CDCUBE01``; u32 nchan, nx, ny, nz;
f32 spacing sx, sy, sz; then ``nchan*nx*ny*nz`` float32 values,
channel-major, x-fastest.  The header carries counts and geometry only;
channel names and patient identity travel in the cohort manifest.

The standardized export target is 224x224x25, but the container itself is
dimension-agnostic so desk-scale cohorts (e.g. 32x32x8 phantoms) use the
same format.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptionError, ParseError, ValidationError
from .volume import Volume3D

MAGIC = b"CDCUBE01"
STANDARD_DIMS = (224, 224, 25)
_HDR = struct.Struct("<4I3f")  # nchan, nx, ny, nz, sx, sy, sz


class StandardCube:
    """Named multi-channel volume; ``data`` has shape (nchan, nx, ny, nz)."""

    def __init__(self, patient_id: str, channels, data: np.ndarray,
                 spacing=(1.0, 1.0, 1.0)):
        channels = tuple(str(c) for c in channels)
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 4 or data.shape[0] != len(channels):
            raise ValidationError(
                f"cube data shape {data.shape} does not match {len(channels)} channels",
                tag="cube.shape")
        if len(set(channels)) != len(channels):
            raise ValidationError(f"duplicate channel names in {channels}",
                                  tag="cube.channels")
        if not np.isfinite(data).all():
            raise ValidationError("cube contains non-finite values", tag="cube.nonfinite")
        if "cdis" in channels:
            ch = data[channels.index("cdis")]
            if ch.min() < 0.0 or ch.max() > 1.0:
                raise ValidationError("cdis channel must stay within [0, 1]",
                                      tag="cube.cdis-range")
        data.flags.writeable = False
        self.patient_id = str(patient_id)
        self.channels = channels
        self.data = data
        self.spacing = tuple(float(s) for s in spacing)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def is_standard_dims(self) -> bool:
        return self.dims == STANDARD_DIMS

    def channel(self, name: str) -> Volume3D:
        if name not in self.channels:
            raise ValidationError(f"no channel {name!r} in cube (have {self.channels})",
                                  tag="cube.channels")
        return Volume3D(self.data[self.channels.index(name)].copy(), self.spacing)


def write_cube(cube: StandardCube, path) -> None:
    nx, ny, nz = cube.dims
    header = MAGIC + _HDR.pack(cube.n_channels, nx, ny, nz, *cube.spacing)
    flat = np.concatenate([cube.data[c].ravel(order="F") for c in range(cube.n_channels)])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(flat, dtype="<f4").tobytes())


def read_cube(path, channel_names=None, patient_id=None) -> StandardCube:
    """Read a raw-cube file.

    The file stores no names, so ``channel_names`` defaults to
    ``ch0..chN-1`` and ``patient_id`` to the file stem.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: magic bytes missing or wrong (expected {MAGIC!r})",
                         tag="cube.magic")
    if len(blob) < len(MAGIC) + _HDR.size:
        raise ParseError(f"{path}: header truncated", tag="cube.header")
    nchan, nx, ny, nz, sx, sy, sz = _HDR.unpack_from(blob, len(MAGIC))
    if min(nchan, nx, ny, nz) < 1:
        raise ParseError(f"{path}: non-positive header field "
                         f"(nchan={nchan}, dims=({nx},{ny},{nz}))", tag="cube.header")
    expected = nchan * nx * ny * nz * 4
    payload = blob[len(MAGIC) + _HDR.size:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: header declares {nchan} channels of {nx}x{ny}x{nz} "
            f"({expected} payload bytes) but file holds {len(payload)}",
            tag="cube.size-mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    # channel-major payload: each channel is an x-fastest block
    data = np.stack([flat[c * nx * ny * nz:(c + 1) * nx * ny * nz]
                     .reshape((nx, ny, nz), order="F") for c in range(nchan)])
    if channel_names is None:
        channel_names = [f"ch{c}" for c in range(nchan)]
    if patient_id is None:
        patient_id = path.stem
    return StandardCube(patient_id, channel_names, data, (sx, sy, sz))
