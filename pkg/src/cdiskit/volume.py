"""In-memory volumetric types shared by every stage of the pipeline.

A volume is a dense 3-D scalar grid indexed ``[x, y, z]`` with voxel spacing
in millimetres.  The linear (file) layout everywhere in this package is
x-fastest, i.e. ``data.ravel(order="F")``.  All types are immutable after
construction: the backing numpy arrays are marked read-only, so instances
can be shared freely across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

NATIVE = "native"
SYNTHETIC = "synthetic"

# fit_adc needs at least one low-b and one high-b native channel; the split
# point between "low" and "high" is 200 s/mm^2.
ADC_FIT_B_SPLIT = 200.0


def _check_spacing(spacing):
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
        raise ValidationError(f"spacing must be three finite positive values, got {spacing}",
                              tag="volume.spacing")
    return sp


@dataclass(frozen=True)
class Volume3D:
    """One scalar volume: ``data[x, y, z]`` plus voxel spacing in mm.

    ``data`` must be float32 or float64 with every value finite; float32 is
    the on-disk representation, float64 only appears in intermediate
    arithmetic (e.g. uncalibrated channel mixes).  ``affine_bytes`` is an
    opaque blob of orientation fields carried through file round trips but
    never interpreted.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine_bytes: bytes | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValidationError(f"volume data must be 3-D, got shape {arr.shape}",
                                  tag="volume.dims")
        if arr.dtype not in (np.float32, np.float64):
            raise ValidationError(f"volume dtype must be float32/float64, got {arr.dtype}",
                                  tag="volume.dtype")
        if not np.isfinite(arr).all():
            raise ValidationError("volume contains NaN or Inf intensities",
                                  tag="volume.nonfinite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_voxels(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        """Linear x-fastest view of the intensities."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, dims, flat, spacing=(1.0, 1.0, 1.0), **kw) -> "Volume3D":
        nx, ny, nz = (int(d) for d in dims)
        arr = np.asarray(flat)
        if arr.size != nx * ny * nz:
            raise ValidationError(
                f"flat buffer has {arr.size} values, dims {dims} need {nx * ny * nz}",
                tag="volume.size")
        return cls(arr.reshape((nx, ny, nz), order="F"), spacing, **kw)

    def with_data(self, data: np.ndarray) -> "Volume3D":
        """Same geometry, new intensities."""
        return Volume3D(data, self.spacing, affine_bytes=self.affine_bytes)


@dataclass(frozen=True)
class MaskVolume:
    """Binary volume; voxel values restricted to {0, 1}."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValidationError(f"mask data must be 3-D, got shape {arr.shape}",
                                  tag="mask.dims")
        if arr.dtype != np.uint8:
            if not np.isin(arr, (0, 1)).all():
                raise ValidationError("mask voxels must all be 0 or 1", tag="mask.values")
            arr = arr.astype(np.uint8)
        elif not np.isin(arr, (0, 1)).all():
            raise ValidationError("mask voxels must all be 0 or 1", tag="mask.values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def flat(self) -> np.ndarray:
        return self.data.ravel(order="F")

    @property
    def n_foreground(self) -> int:
        return int(self.data.sum())

    def as_volume(self) -> Volume3D:
        return Volume3D(self.data.astype(np.float32), self.spacing)


@dataclass(frozen=True)
class DwiStack:
    """Per-patient multi-b-value acquisition: one Volume3D per b-value.

    b-values are strictly ascending; each channel is tagged ``native``
    (measured) or ``synthetic`` (computed from a fitted decay model).  Native
    channels must cover both sides of the low/high-b split so a decay fit is
    always possible.
    """

    patient_id: str
    bvalues: tuple[float, ...]
    volumes: tuple[Volume3D, ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        bvals = tuple(float(b) for b in self.bvalues)
        vols = tuple(self.volumes)
        prov = tuple(self.provenance)
        if not (len(bvals) == len(vols) == len(prov)):
            raise ValidationError(
                f"channel lists disagree: {len(bvals)} b-values, {len(vols)} volumes, "
                f"{len(prov)} provenance flags", tag="stack.channels")
        if len(bvals) < 2:
            raise ValidationError("a stack needs at least 2 channels", tag="stack.channels")
        if bvals[0] < 0:
            raise ValidationError(f"b-values must be >= 0, got {bvals[0]}", tag="stack.bvalues")
        if any(b2 <= b1 for b1, b2 in zip(bvals, bvals[1:])):
            raise ValidationError(f"b-values must be strictly ascending, got {bvals}",
                                  tag="stack.bvalues")
        if any(p not in (NATIVE, SYNTHETIC) for p in prov):
            raise ValidationError(f"provenance flags must be native/synthetic, got {prov}",
                                  tag="stack.provenance")
        dims = vols[0].dims
        spacing = vols[0].spacing
        for i, v in enumerate(vols):
            if v.dims != dims or v.spacing != spacing:
                raise ValidationError(
                    f"channel {i} geometry {v.dims}/{v.spacing} differs from "
                    f"channel 0 {dims}/{spacing}", tag="stack.geometry")
        native_b = [b for b, p in zip(bvals, prov) if p == NATIVE]
        if not any(b < ADC_FIT_B_SPLIT for b in native_b) or \
           not any(b >= ADC_FIT_B_SPLIT for b in native_b):
            raise ValidationError(
                f"need a native channel below and at/above b={ADC_FIT_B_SPLIT:g}, "
                f"got native b={native_b}", tag="stack.native-coverage")
        object.__setattr__(self, "bvalues", bvals)
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "provenance", prov)

    @property
    def n_channels(self) -> int:
        return len(self.bvalues)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.volumes[0].dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.volumes[0].spacing

    def native_indices(self) -> list[int]:
        return [i for i, p in enumerate(self.provenance) if p == NATIVE]

    def channel(self, b: float) -> Volume3D:
        for bv, vol in zip(self.bvalues, self.volumes):
            if bv == float(b):
                return vol
        raise ValidationError(f"no channel at b={b} (have {self.bvalues})",
                              tag="stack.bvalues")

    def signal_matrix(self, indices=None) -> np.ndarray:
        """Channel-major (n_channels, n_voxels) float64 matrix, x-fastest."""
        idx = range(self.n_channels) if indices is None else indices
        return np.stack([self.volumes[i].flat().astype(np.float64) for i in idx])


def check_mask_matches(mask: MaskVolume, dims) -> None:
    if mask.dims != tuple(dims):
        raise ValidationError(f"mask dims {mask.dims} do not match volume dims {tuple(dims)}",
                              tag="mask.dims-mismatch")
