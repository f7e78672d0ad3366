"""Voxelwise apparent-diffusion-coefficient fitting and signal synthesis.

The decay model is monoexponential, ``S(b) = S0 * exp(-b * ADC)``.  Fitting
is a closed-form least-squares line through ``ln S`` versus ``b`` over the
*native* channels only; synthetic channels are outputs of the model and are
never fed back into a fit.  Negative fitted slopes (noise) clamp to ADC=0
rather than rejecting the voxel, so downstream mixing always has a complete
field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, ValidationError
from .volume import NATIVE, SYNTHETIC, DwiStack, MaskVolume, Volume3D

DEFAULT_FLOOR_FRACTION = 1e-6  # floor = fraction * max signal in the stack


@dataclass(frozen=True)
class AdcMap:
    """Fitted decay model: ADC (mm^2/s), S0, and the valid-fit mask."""

    adc: Volume3D
    s0: Volume3D
    fit_mask: MaskVolume

    def __post_init__(self):
        if not (self.adc.dims == self.s0.dims == self.fit_mask.dims):
            raise ValidationError(
                f"adc/s0/fit_mask dims disagree: {self.adc.dims}, {self.s0.dims}, "
                f"{self.fit_mask.dims}", tag="adcmap.dims")
        inside = self.fit_mask.data == 1
        if inside.any():
            if self.adc.data[inside].min() < 0:
                raise ValidationError("ADC must be >= 0 inside fit_mask", tag="adcmap.adc")
            if self.s0.data[inside].min() <= 0:
                raise ValidationError("S0 must be > 0 inside fit_mask", tag="adcmap.s0")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.adc.dims


def default_floor(stack: DwiStack) -> float:
    top = max(float(v.data.max()) for v in stack.volumes)
    return DEFAULT_FLOOR_FRACTION * top if top > 0 else DEFAULT_FLOOR_FRACTION


def fit_adc(stack: DwiStack, floor: float | None = None) -> AdcMap:
    """Least-squares log-linear fit over the native channels of ``stack``.

    Per voxel the line ``ln(max(S, floor)) = ln(S0) - ADC * b`` is fitted;
    the slope gives ADC (clamped to >= 0).  Voxels whose every native signal
    is at or below ``floor`` carry no information: they are dropped from
    ``fit_mask`` and assigned ADC=0, S0=floor.
    """
    native = stack.native_indices()
    if len(native) < 2:
        raise ContractViolation(f"ADC fit needs >= 2 native channels, stack has {len(native)}",
                                tag="adc.native-channels")
    if floor is None:
        floor = default_floor(stack)
    if not floor > 0:
        raise ContractViolation(f"floor must be > 0, got {floor}", tag="adc.floor")

    b = np.asarray([stack.bvalues[i] for i in native], dtype=np.float64)
    signals = stack.signal_matrix(native)  # (n_native, n_voxels)

    fit_mask = (signals > floor).any(axis=0)
    logs = np.log(np.maximum(signals, floor))

    # slope/intercept of the least-squares line y = a + m*b, vectorized
    bc = b - b.mean()
    denom = float((bc ** 2).sum())
    slope = bc @ logs / denom
    intercept = logs.mean(axis=0) - slope * b.mean()

    adc = np.maximum(-slope, 0.0)
    s0 = np.exp(intercept)
    adc[~fit_mask] = 0.0
    s0[~fit_mask] = floor

    dims, spacing = stack.dims, stack.spacing
    return AdcMap(
        adc=Volume3D.from_flat(dims, adc, spacing),
        s0=Volume3D.from_flat(dims, s0, spacing),
        fit_mask=MaskVolume(
            fit_mask.astype(np.uint8).reshape(dims, order="F"), spacing),
    )


def synthesize_signal(adc_map: AdcMap, b: float) -> Volume3D:
    """Model signal ``S0 * exp(-b * ADC)`` at b; zero outside ``fit_mask``."""
    if b < 0:
        raise ContractViolation(f"b must be >= 0, got {b}", tag="adc.negative-b")
    signal = adc_map.s0.data * np.exp(-float(b) * adc_map.adc.data)
    signal = np.where(adc_map.fit_mask.data == 1, signal, 0.0)
    return Volume3D(signal, adc_map.adc.spacing)


def extend_stack(stack: DwiStack, adc_map: AdcMap,
                 synthetic_bvalues) -> DwiStack:
    """Append model-synthesized channels and re-sort ascending by b."""
    synth = [float(b) for b in synthetic_bvalues]
    if len(set(synth)) != len(synth):
        raise ValidationError(f"duplicate synthetic b-values in {synth}",
                              tag="adc.duplicate-b")
    overlap = set(synth) & set(stack.bvalues)
    if overlap:
        raise ValidationError(f"synthetic b-values {sorted(overlap)} already in stack",
                              tag="adc.duplicate-b")
    if adc_map.dims != stack.dims:
        raise ContractViolation(f"adc map dims {adc_map.dims} != stack dims {stack.dims}",
                                tag="adc.dims")
    if not synth:
        return stack

    channels = list(zip(stack.bvalues, stack.provenance, stack.volumes))
    for b in synth:
        channels.append((b, SYNTHETIC, synthesize_signal(adc_map, b)))
    channels.sort(key=lambda c: c[0])
    bvals, prov, vols = zip(*channels)
    return DwiStack(stack.patient_id, bvals, vols, prov)
