"""On-disk layout for per-patient acquisitions.

A patient directory holds one NIfTI file per channel plus ``stack.json``
describing the channels::

    P000/
      stack.json          {"patient_id": ..., "channels": [{"b", "provenance", "file"}]}
      b0000.nii b0100.nii ...   native channels
      s1500.nii ...             synthetic channels
      mask.nii                  tumour mask (optional)

The JSON file is authoritative; file names are just a convention.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError
from .nifti import read_nifti, write_nifti
from .volume import NATIVE, DwiStack, MaskVolume, Volume3D

STACK_JSON = "stack.json"
MASK_FILE = "mask.nii"


def channel_filename(b: float, provenance: str) -> str:
    prefix = "b" if provenance == NATIVE else "s"
    if float(b) == int(b):
        return f"{prefix}{int(b):04d}.nii"
    return f"{prefix}{float(b):g}.nii"


def write_stack(stack: DwiStack, directory, mask: MaskVolume | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    channels = []
    for b, prov, vol in zip(stack.bvalues, stack.provenance, stack.volumes):
        fname = channel_filename(b, prov)
        write_nifti(vol, directory / fname)
        channels.append({"b": b, "provenance": prov, "file": fname})
    meta = {"patient_id": stack.patient_id, "channels": channels}
    (directory / STACK_JSON).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if mask is not None:
        write_mask(mask, directory / MASK_FILE)
    return directory


def read_stack(directory) -> DwiStack:
    directory = Path(directory)
    meta_path = directory / STACK_JSON
    if not meta_path.is_file():
        raise DataError(f"{directory}: no {STACK_JSON}; not a patient stack directory",
                        tag="stack.missing-json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DataError(f"{meta_path}: invalid JSON ({err})", tag="stack.bad-json") from None
    try:
        entries = sorted(meta["channels"], key=lambda c: float(c["b"]))
        bvalues = [float(c["b"]) for c in entries]
        provenance = [c["provenance"] for c in entries]
        volumes = [read_nifti(directory / c["file"]) for c in entries]
        patient_id = meta["patient_id"]
    except KeyError as err:
        raise DataError(f"{meta_path}: missing key {err}", tag="stack.bad-json") from None
    return DwiStack(patient_id, tuple(bvalues), tuple(volumes), tuple(provenance))


def write_mask(mask: MaskVolume, path) -> None:
    write_nifti(mask.as_volume(), path)


def read_mask(path) -> MaskVolume:
    vol = read_nifti(path)
    data = vol.data
    if not np.isin(data, (0.0, 1.0)).all():
        raise ValidationError(f"{path}: mask voxels must be 0 or 1", tag="mask.values")
    return MaskVolume(data.astype(np.uint8), vol.spacing)


def read_patient(directory) -> tuple[DwiStack, MaskVolume | None]:
    directory = Path(directory)
    stack = read_stack(directory)
    mask_path = directory / MASK_FILE
    mask = read_mask(mask_path) if mask_path.is_file() else None
    return stack, mask


def write_volume_map(volumes: dict[str, Volume3D], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, vol in volumes.items():
        write_nifti(vol, directory / f"{name}.nii")
