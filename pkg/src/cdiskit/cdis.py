"""Correlated diffusion signal: per-channel power mixing plus calibration.

The mixed signal is a geometric (power-product) combination of the extended
stack's channels,

    raw(x) = prod_i max(S_i(x), eps) ** rho_i,

evaluated in log space for stability.  This multiplicative form is an
explicit modelling assumption of this toolkit: it is monotone in every
channel, and scaling all exponents by a positive constant only raises the
whole volume to a power, which preserves voxel rank order (and therefore
every rank-based score downstream).

Calibration then maps the raw volume into [0, 1] by a robust percentile
window: values at/below the low percentile clamp to 0, at/above the high
percentile to 1.  Percentiles use the linear-interpolation definition
(order statistic at fractional position ``q * (n - 1)``).  Calibration is
per volume, i.e. per patient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation, ValidationError
from .volume import DwiStack, Volume3D

DEFAULT_BOUNDS = (0.0, 4.0)
DEFAULT_EPS_FRACTION = 1e-6  # eps = fraction * max signal in the stack
DEFAULT_P_LO = 1.0
DEFAULT_P_HI = 99.0


@dataclass(frozen=True)
class CoefficientVector:
    """Per-channel mixing exponents, bounded to ``bounds``."""

    rho: tuple[float, ...]
    channel_bvalues: tuple[float, ...]
    bounds: tuple[float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        bvals = tuple(float(b) for b in self.channel_bvalues)
        lo, hi = (float(x) for x in self.bounds)
        if len(rho) != len(bvals):
            raise ValidationError(
                f"{len(rho)} exponents for {len(bvals)} channel b-values",
                tag="coeffs.length")
        if not rho:
            raise ValidationError("empty coefficient vector", tag="coeffs.length")
        if lo >= hi:
            raise ValidationError(f"bounds ({lo}, {hi}) must satisfy lo < hi",
                                  tag="coeffs.bounds")
        if any(not np.isfinite(r) or r < lo or r > hi for r in rho):
            raise ValidationError(f"exponents {rho} outside bounds [{lo}, {hi}]",
                                  tag="coeffs.bounds")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "channel_bvalues", bvals)
        object.__setattr__(self, "bounds", (lo, hi))

    def __len__(self) -> int:
        return len(self.rho)

    def require_scoring(self) -> "CoefficientVector":
        """An all-zero vector mixes every channel out; refuse to score with it."""
        if all(r == 0.0 for r in self.rho):
            raise ValidationError("all-zero coefficient vector cannot score a volume",
                                  tag="coeffs.all-zero")
        return self

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rho, dtype=np.float64)


@dataclass(frozen=True)
class CalibrationRecord:
    p_lo: float
    p_hi: float
    v_lo: float
    v_hi: float
    degenerate: bool = False


@dataclass(frozen=True)
class CdisVolume:
    """Calibrated mixed signal in [0, 1] plus how it was produced.

    ``coefficients`` is None when a single plain volume was calibrated
    without mixing (e.g. a DWI channel normalized for fusion).
    """

    signal: Volume3D
    coefficients: CoefficientVector | None
    calibration: CalibrationRecord

    def __post_init__(self):
        lo = float(self.signal.data.min())
        hi = float(self.signal.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"calibrated signal range [{lo}, {hi}] outside [0, 1]",
                                  tag="cdis.range")
        if not self.calibration.degenerate and \
                not self.calibration.v_hi > self.calibration.v_lo:
            raise ValidationError("calibration window collapsed without degenerate flag",
                                  tag="cdis.calibration")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.signal.dims


def default_eps(stack: DwiStack, fraction: float = DEFAULT_EPS_FRACTION) -> float:
    top = max(float(v.data.max()) for v in stack.volumes)
    return fraction * top if top > 0 else fraction


def mix(stack: DwiStack, coeffs: CoefficientVector, eps: float) -> Volume3D:
    """Power-product channel mix; float64, uncalibrated."""
    if len(coeffs) != stack.n_channels:
        raise ContractViolation(
            f"{len(coeffs)} coefficients for a {stack.n_channels}-channel stack",
            tag="cdis.length")
    if coeffs.channel_bvalues != stack.bvalues:
        raise ContractViolation(
            f"coefficient b-values {coeffs.channel_bvalues} do not match stack "
            f"b-values {stack.bvalues}", tag="cdis.bvalues")
    if not eps > 0:
        raise ContractViolation(f"eps must be > 0, got {eps}", tag="cdis.eps")
    signals = stack.signal_matrix()  # (n_channels, n_voxels) float64
    log_raw = coeffs.as_array() @ np.log(np.maximum(signals, eps))
    return Volume3D.from_flat(stack.dims, np.exp(log_raw), stack.spacing)


def calibrate(raw: Volume3D, p_lo: float = DEFAULT_P_LO,
              p_hi: float = DEFAULT_P_HI,
              coefficients: CoefficientVector | None = None) -> CdisVolume:
    """Rescale ``raw`` into [0, 1] between its ``p_lo``/``p_hi`` percentiles.

    A constant volume has no dynamic range; it maps to all zeros with the
    ``degenerate`` flag set instead of failing.
    """
    if not (0.0 <= p_lo < p_hi <= 100.0):
        raise ConfigError(f"need 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})",
                          tag="config.calibration.percentiles")
    flat = raw.flat().astype(np.float64)
    v_lo, v_hi = np.percentile(flat, [p_lo, p_hi])  # linear interpolation
    if v_hi == v_lo:
        signal = raw.with_data(np.zeros(raw.dims, dtype=np.float64))
        record = CalibrationRecord(p_lo, p_hi, float(v_lo), float(v_hi), degenerate=True)
    else:
        scaled = np.clip((raw.data.astype(np.float64) - v_lo) / (v_hi - v_lo), 0.0, 1.0)
        signal = raw.with_data(scaled)
        record = CalibrationRecord(p_lo, p_hi, float(v_lo), float(v_hi))
    return CdisVolume(signal, coefficients, record)


def cdis(stack: DwiStack, coeffs: CoefficientVector, eps: float | None = None,
         p_lo: float = DEFAULT_P_LO, p_hi: float = DEFAULT_P_HI) -> CdisVolume:
    """Full pipeline: mix then calibrate, recording both."""
    if eps is None:
        eps = default_eps(stack)
    raw = mix(stack, coeffs, eps)
    return calibrate(raw, p_lo, p_hi, coefficients=coeffs)


def write_coefficients(coeffs: CoefficientVector, provenance, path) -> None:
    """JSON array of {b, provenance, rho}, one entry per channel."""
    entries = [{"b": b, "provenance": p, "rho": r}
               for b, p, r in zip(coeffs.channel_bvalues, provenance, coeffs.rho)]
    Path(path).write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")


def read_coefficients(path, bounds=DEFAULT_BOUNDS):
    """Inverse of :func:`write_coefficients`; returns (coeffs, provenance)."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON ({err})", tag="coeffs.json") from None
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{path}: expected a non-empty JSON array",
                              tag="coeffs.json")
    try:
        bvals = tuple(float(e["b"]) for e in entries)
        rho = tuple(float(e["rho"]) for e in entries)
        provenance = tuple(str(e["provenance"]) for e in entries)
    except (KeyError, TypeError) as err:
        raise ValidationError(f"{path}: each entry needs b/provenance/rho ({err})",
                              tag="coeffs.json") from None
    return CoefficientVector(rho, bvals, bounds=bounds), provenance
