"""Fusing the calibrated mix with DWI and standardizing cube geometry.

Resampling uses the align-corners convention: source corner voxels map
exactly onto target corner voxels, i.e. source index = target index *
(S-1)/(D-1) along each axis.  Signal channels are interpolated
trilinearly; masks use nearest-neighbor so the output stays binary.
Spacing is rescaled so the physical extent (dim-1)*spacing is preserved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .cdis import CdisVolume, CoefficientVector, calibrate, cdis, default_eps
from .cube import STANDARD_DIMS, StandardCube, write_cube
from .errors import ConfigError, ContractViolation, ValidationError
from .manifest import ManifestRow
from .volume import DwiStack, MaskVolume, Volume3D

FUSE_MODES = ("stack", "product")


def _axis_lerp(arr: np.ndarray, axis: int, idx0: np.ndarray,
               frac: np.ndarray) -> np.ndarray:
    lo = np.take(arr, idx0, axis=axis)
    hi = np.take(arr, idx0 + 1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = frac.size
    w = frac.reshape(shape)
    return lo * (1.0 - w) + hi * w


def _grid(src: int, dst: int, axis: int) -> np.ndarray:
    if src < 2:
        raise ValidationError(f"axis {axis} has {src} voxel(s); resampling needs >= 2",
                              tag="resample.degenerate-axis")
    if dst < 2:
        raise ConfigError(f"target axis {axis} must be >= 2, got {dst}",
                          tag="config.resample.dims")
    return np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)


def _rescaled_spacing(spacing, src_dims, dst_dims) -> tuple[float, float, float]:
    return tuple(s * (sd - 1) / (dd - 1)
                 for s, sd, dd in zip(spacing, src_dims, dst_dims))


def resample_volume(volume: Volume3D, dims: tuple[int, int, int] = STANDARD_DIMS
                    ) -> Volume3D:
    """Trilinear resample onto ``dims``; exact identity when dims match."""
    dims = tuple(int(d) for d in dims)
    if dims == volume.dims:
        return volume
    data = volume.data.astype(np.float64)
    for axis, (src, dst) in enumerate(zip(volume.dims, dims)):
        coords = _grid(src, dst, axis)
        idx0 = np.minimum(coords.astype(np.int64), src - 2)
        data = _axis_lerp(data, axis, idx0, coords - idx0)
    # convex combination up to float rounding; pin the extremes
    data = np.clip(data, float(volume.data.min()), float(volume.data.max()))
    return Volume3D(data, _rescaled_spacing(volume.spacing, volume.dims, dims))


def resample_mask(mask: MaskVolume, dims: tuple[int, int, int] = STANDARD_DIMS
                  ) -> MaskVolume:
    """Nearest-neighbor resample; output stays strictly binary."""
    dims = tuple(int(d) for d in dims)
    if dims == mask.dims:
        return mask
    data = mask.data
    for axis, (src, dst) in enumerate(zip(mask.dims, dims)):
        coords = _grid(src, dst, axis)
        nearest = np.minimum(np.floor(coords + 0.5).astype(np.int64), src - 1)
        data = np.take(data, nearest, axis=axis)
    return MaskVolume(data, _rescaled_spacing(mask.spacing, mask.dims, dims))


def dwi_channel_name(b: float) -> str:
    return f"dwi_b{b:g}"


def fuse(cdis_volume: CdisVolume, dwi: list[tuple[str, Volume3D]], mode: str,
         include_inputs: bool = False) -> tuple[tuple[str, Volume3D], ...]:
    """Combine the calibrated mix with DWI channels.

    stack: concatenation [cdis, dwi...] with DWI left in its raw units.
    product: one channel cdis * calibrated(dwi); exactly one DWI input.
    """
    if mode not in FUSE_MODES:
        raise ConfigError(f"fuse mode must be one of {FUSE_MODES}, got {mode!r}",
                          tag="config.fusion.mode")
    if not dwi:
        raise ContractViolation("fusion needs at least one DWI channel",
                                tag="fusion.no-dwi")
    for name, vol in dwi:
        if vol.dims != cdis_volume.dims:
            raise ContractViolation(
                f"DWI channel {name!r} dims {vol.dims} do not match cdis "
                f"{cdis_volume.dims}", tag="fusion.dims")

    if mode == "stack":
        return (("cdis", cdis_volume.signal), *((n, v) for n, v in dwi))

    if len(dwi) != 1:
        raise ConfigError(f"product mode fuses exactly one DWI channel, got "
                          f"{len(dwi)}", tag="config.fusion.product-channels")
    name, vol = dwi[0]
    dwi_norm = calibrate(vol)
    product = cdis_volume.signal.data.astype(np.float64) * \
        dwi_norm.signal.data.astype(np.float64)
    channels = [("cdis_dwi", cdis_volume.signal.with_data(product))]
    if include_inputs:
        channels.append(("cdis", cdis_volume.signal))
        channels.append((name, dwi_norm.signal))
    return tuple(channels)


def select_dwi(stack: DwiStack, bvalues: tuple[float, ...] | None = None
               ) -> list[tuple[str, Volume3D]]:
    """Pick fusion DWI channels; default is the highest native b-value."""
    if bvalues is None:
        native = [stack.bvalues[i] for i in stack.native_indices()]
        bvalues = (max(native),)
    return [(dwi_channel_name(b), stack.channel(b)) for b in bvalues]


def export_patient(patient_id: str, grade: str, cdis_volume: CdisVolume,
                   stack: DwiStack, mask: MaskVolume | None, mode: str,
                   out_dir, *, dwi_bvalues: tuple[float, ...] | None = None,
                   include_inputs: bool = False,
                   target_dims: tuple[int, int, int] = STANDARD_DIMS,
                   export_mask: bool = False) -> ManifestRow:
    """Fuse, standardize, write ``<patient_id>.cube``; returns the row."""
    channels = fuse(cdis_volume, select_dwi(stack, dwi_bvalues), mode,
                    include_inputs=include_inputs)
    resampled = [(name, resample_volume(vol, target_dims)) for name, vol in channels]
    spacing = resampled[0][1].spacing
    cube = StandardCube(patient_id, [name for name, _ in resampled],
                        np.stack([vol.data for _, vol in resampled]), spacing)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cube_name = f"{patient_id}.cube"
    write_cube(cube, out_dir / cube_name)
    if export_mask:
        if mask is None:
            raise ContractViolation("export_mask requested without a mask",
                                    tag="fusion.no-mask")
        mask_rs = resample_mask(mask, target_dims)
        mask_cube = StandardCube(patient_id, ["mask"],
                                 mask_rs.data.astype(np.float32)[None],
                                 mask_rs.spacing)
        write_cube(mask_cube, out_dir / f"{patient_id}.mask.cube")
    return ManifestRow(patient_id=patient_id, grade=grade, cube_path=cube_name)


def cdis_for_patient(stack: DwiStack, coeffs: CoefficientVector,
                     eps_fraction: float, p_lo: float, p_hi: float) -> CdisVolume:
    """Scoring-path composition shared by the CLI subcommands."""
    eps = default_eps(stack, eps_fraction)
    return cdis(stack, coeffs.require_scoring(), eps=eps, p_lo=p_lo, p_hi=p_hi)
