"""Minimal single-file NIfTI-1 reader/writer.

Supported subset: magic ``n+1`` (.nii, header+payload in one file),
little-endian, datatype int16 or float32, 3-D images (or 4-D with a single
time point).  int16 voxels are promoted to float32 at load, applying
``scl_slope``/``scl_inter`` when the slope is nonzero.  Geometry is taken
from ``pixdim[1..3]`` only; the qform/sform block (bytes 252..327) is kept
as an opaque blob so writes can round-trip it, but it is never interpreted.
Big-endian files, .hdr/.img pairs, NIfTI-2 and in-reader compression are
out of scope.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, TruncatedFileError, UnsupportedFormatError
from .volume import Volume3D

HEADER_SIZE = 348
VOX_OFFSET = 352  # header + 4-byte extension flag
MAGIC = b"n+1\x00"

DT_INT16 = 4
DT_FLOAT32 = 16

# Offsets into the 348-byte header (NIfTI-1, little-endian).
_OFF_DIM = 40          # short dim[8]
_OFF_DATATYPE = 70     # short datatype
_OFF_BITPIX = 72       # short bitpix
_OFF_PIXDIM = 76       # float pixdim[8]
_OFF_VOX_OFFSET = 108  # float vox_offset
_OFF_SCL_SLOPE = 112   # float scl_slope
_OFF_SCL_INTER = 116   # float scl_inter
_OFF_AFFINE = 252      # qform_code .. srow_z, 76 opaque bytes
_AFFINE_LEN = 76
_OFF_MAGIC = 344


def read_nifti(path) -> Volume3D:
    """Load a single-file NIfTI-1 volume from ``path``."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: file shorter than a NIfTI-1 header",
                                 expected=HEADER_SIZE, actual=len(blob),
                                 tag="nifti.truncated")
    hdr = blob[:HEADER_SIZE]

    (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise ParseError(f"{path}: sizeof_hdr is {sizeof_hdr}, must be {HEADER_SIZE}",
                         tag="nifti.sizeof_hdr")
    magic = hdr[_OFF_MAGIC:_OFF_MAGIC + 4]
    if magic != MAGIC:
        raise ParseError(f"{path}: magic is {magic!r}, must be {MAGIC!r}",
                         tag="nifti.magic")

    dim = struct.unpack_from("<8h", hdr, _OFF_DIM)
    ndim = dim[0]
    if ndim == 3:
        pass
    elif ndim == 4 and dim[4] == 1:
        pass
    else:
        raise UnsupportedFormatError(
            f"{path}: dim={dim[:5]} not supported (need 3-D, or 4-D with one time point)",
            tag="nifti.dim")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise ParseError(f"{path}: non-positive dim {dim[1:4]}", tag="nifti.dim")

    (datatype,) = struct.unpack_from("<h", hdr, _OFF_DATATYPE)
    if datatype == DT_FLOAT32:
        dtype, itemsize = np.dtype("<f4"), 4
    elif datatype == DT_INT16:
        dtype, itemsize = np.dtype("<i2"), 2
    else:
        raise UnsupportedFormatError(f"{path}: datatype code {datatype} not supported "
                                     "(int16 and float32 only)", tag="nifti.datatype")

    pixdim = struct.unpack_from("<8f", hdr, _OFF_PIXDIM)
    (vox_offset_f,) = struct.unpack_from("<f", hdr, _OFF_VOX_OFFSET)
    vox_offset = int(vox_offset_f)
    if vox_offset < HEADER_SIZE:
        raise ParseError(f"{path}: vox_offset {vox_offset_f} below header size",
                         tag="nifti.vox_offset")
    scl_slope, scl_inter = struct.unpack_from("<2f", hdr, _OFF_SCL_SLOPE)

    n_vox = nx * ny * nz
    expected = n_vox * itemsize
    payload = blob[vox_offset:vox_offset + expected]
    if len(payload) != expected:
        raise TruncatedFileError(f"{path}: voxel payload truncated",
                                 expected=expected, actual=len(payload),
                                 tag="nifti.truncated")

    raw = np.frombuffer(payload, dtype=dtype)
    data = raw.astype(np.float32)
    if scl_slope != 0.0:
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    # Volume3D construction rejects NaN/Inf, which covers the no-silent-
    # replacement rule for non-finite inputs.
    return Volume3D.from_flat(
        (nx, ny, nz), data, spacing=(pixdim[1], pixdim[2], pixdim[3]),
        affine_bytes=hdr[_OFF_AFFINE:_OFF_AFFINE + _AFFINE_LEN])


def write_nifti(vol: Volume3D, path) -> None:
    """Write ``vol`` as single-file float32 NIfTI-1.

    float64 volumes are cast to float32 (lossy); float32 volumes round-trip
    bit-exactly through :func:`read_nifti`.
    """
    path = Path(path)
    nx, ny, nz = vol.dims
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, _OFF_DIM, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, _OFF_DATATYPE, DT_FLOAT32, 32)  # datatype, bitpix
    sx, sy, sz = vol.spacing
    struct.pack_into("<8f", hdr, _OFF_PIXDIM, 1.0, sx, sy, sz, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, _OFF_VOX_OFFSET, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, _OFF_SCL_SLOPE, 1.0, 0.0)
    if vol.affine_bytes is not None:
        if len(vol.affine_bytes) != _AFFINE_LEN:
            raise ParseError(f"affine blob must be {_AFFINE_LEN} bytes, "
                             f"got {len(vol.affine_bytes)}", tag="nifti.affine")
        hdr[_OFF_AFFINE:_OFF_AFFINE + _AFFINE_LEN] = vol.affine_bytes
    hdr[_OFF_MAGIC:_OFF_MAGIC + 4] = MAGIC

    payload = np.ascontiguousarray(vol.flat(), dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(hdr))
        fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))  # no extensions
        fh.write(payload)
