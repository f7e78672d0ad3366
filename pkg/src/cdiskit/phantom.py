"""Synthetic DWI cohorts with known ground truth.

Every downstream stage (decay fitting, channel mixing, AUC scoring, the
grade harness) is validated against phantoms generated here: ellipsoidal
"tumours" with a distinct diffusion coefficient inside a uniform
background, imaged at a configurable set of b-values with optional additive
Gaussian noise.

Randomness model: a single 64-bit seed feeds a ``numpy.random.SeedSequence``;
patient ``i`` of a cohort draws from the counter-based Philox generator
keyed by spawn child ``i + 1`` (child ``0`` drives cohort-level draws such
as grade shuffling).  A standalone patient uses the root sequence directly.
Identical seeds therefore reproduce cohorts bit-exactly, independent of
how patients are parallelized.

Signals are generated in float64 so that noiseless phantoms satisfy the
monoexponential identity to full double precision; they only drop to
float32 when written to disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adc import AdcMap
from .errors import ValidationError
from .manifest import GRADES, DatasetManifest, ManifestRow
from .volume import NATIVE, DwiStack, MaskVolume, Volume3D

DEFAULT_BVALUES = (0.0, 100.0, 600.0, 800.0)

# Per-grade tumour morphology: multiplicative scales on the template's
# tumour ADC and radii.  Grade III tumours are larger and more restricted
# (lower ADC), so binary grade groups stay statistically separable.
GRADE_ADC_SCALE = {"I": 1.15, "II": 1.0, "III": 0.8}
GRADE_RADIUS_SCALE = {"I": 0.70, "II": 0.85, "III": 1.25}
_JITTER = 0.08  # uniform +/- fraction applied per patient to ADC and radii


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (32, 32, 8)
    spacing: tuple[float, float, float] = (1.5, 1.5, 3.0)
    background_adc: float = 2.0e-3  # mm^2/s
    tumor_adc: float = 1.0e-3
    s0_mean: float = 1000.0
    tumor_center: tuple[float, float, float] | None = None  # voxel coords; None = grid centre
    tumor_radii: tuple[float, float, float] = (5.0, 5.0, 2.2)
    noise_sigma: float = 0.0  # fraction of s0_mean
    bvalues: tuple[float, ...] = DEFAULT_BVALUES
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValidationError(f"bad dims {self.dims}", tag="phantom.dims")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        for name in ("background_adc", "tumor_adc"):
            v = getattr(self, name)
            if not 0.0 < v < 0.01:
                raise ValidationError(f"{name}={v} outside (0, 0.01) mm^2/s",
                                      tag=f"phantom.{name}")
        if self.s0_mean <= 0:
            raise ValidationError(f"s0_mean must be > 0, got {self.s0_mean}",
                                  tag="phantom.s0_mean")
        if not 0.0 <= self.noise_sigma <= 0.2:
            raise ValidationError(f"noise_sigma={self.noise_sigma} outside [0, 0.2]",
                                  tag="phantom.noise_sigma")
        center = self.tumor_center
        if center is None:
            center = tuple((d - 1) / 2.0 for d in dims)
        else:
            center = tuple(float(c) for c in center)
        object.__setattr__(self, "tumor_center", center)
        radii = tuple(float(r) for r in self.tumor_radii)
        if min(radii) <= 0:
            raise ValidationError(f"radii must be positive, got {radii}",
                                  tag="phantom.radii")
        for c, r, d in zip(center, radii, dims):
            if c - r < 0 or c + r > d - 1:
                raise ValidationError(
                    f"ellipsoid (center {center}, radii {radii}) does not fit dims {dims}",
                    tag="phantom.radii")
        object.__setattr__(self, "tumor_radii", radii)
        object.__setattr__(self, "bvalues", tuple(float(b) for b in self.bvalues))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class PhantomPatient:
    patient_id: str
    grade: str
    spec: PhantomSpec = field(repr=False)
    stack: DwiStack = field(repr=False)
    mask: MaskVolume = field(repr=False)
    truth: AdcMap = field(repr=False)


def ellipsoid_mask(dims, center, radii, spacing=(1.0, 1.0, 1.0)) -> MaskVolume:
    """Voxels whose index lies inside the (inclusive) ellipsoid."""
    nx, ny, nz = dims
    x = np.arange(nx, dtype=np.float64)[:, None, None]
    y = np.arange(ny, dtype=np.float64)[None, :, None]
    z = np.arange(nz, dtype=np.float64)[None, None, :]
    cx, cy, cz = center
    rx, ry, rz = radii
    inside = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2 <= 1.0
    return MaskVolume(inside.astype(np.uint8), spacing)


def _generate(spec: PhantomSpec, rng: np.random.Generator):
    mask = ellipsoid_mask(spec.dims, spec.tumor_center, spec.tumor_radii, spec.spacing)
    adc = np.full(spec.dims, spec.background_adc, dtype=np.float64)
    adc[mask.data == 1] = spec.tumor_adc
    s0 = np.full(spec.dims, spec.s0_mean, dtype=np.float64)

    volumes = []
    for b in spec.bvalues:  # channel noise drawn in ascending-b order
        signal = s0 * np.exp(-b * adc)
        if spec.noise_sigma > 0.0:
            signal = signal + spec.noise_sigma * spec.s0_mean * \
                rng.standard_normal(spec.dims)
            signal = np.maximum(signal, 0.0)
        volumes.append(Volume3D(signal, spec.spacing))

    stack = DwiStack(
        patient_id="phantom",
        bvalues=spec.bvalues,
        volumes=tuple(volumes),
        provenance=(NATIVE,) * len(spec.bvalues),
    )
    truth = AdcMap(
        adc=Volume3D(adc, spec.spacing),
        s0=Volume3D(s0, spec.spacing),
        fit_mask=MaskVolume(np.ones(spec.dims, dtype=np.uint8), spec.spacing),
    )
    return stack, mask, truth


def generate_patient(spec: PhantomSpec, patient_id: str = "phantom",
                     _seed_seq: np.random.SeedSequence | None = None):
    """Build one phantom: (DwiStack, MaskVolume, ground-truth AdcMap)."""
    ss = _seed_seq if _seed_seq is not None else np.random.SeedSequence(spec.seed)
    rng = np.random.Generator(np.random.Philox(ss))
    stack, mask, truth = _generate(spec, rng)
    return replace(stack, patient_id=patient_id), mask, truth


def allocate_counts(n: int, proportions: dict[str, float]) -> dict[str, int]:
    """Integer class counts by largest remainder; deterministic tie-break by grade order."""
    total = sum(proportions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"grade mix proportions sum to {total}, expected 1",
                              tag="phantom.grade_mix")
    if any(g not in GRADES for g in proportions):
        raise ValidationError(f"unknown grade in mix {sorted(proportions)}",
                              tag="phantom.grade_mix")
    raw = {g: n * proportions.get(g, 0.0) for g in GRADES}
    counts = {g: int(np.floor(raw[g])) for g in GRADES}
    leftover = n - sum(counts.values())
    by_remainder = sorted(GRADES, key=lambda g: (-(raw[g] - counts[g]), GRADES.index(g)))
    for g in by_remainder[:leftover]:
        counts[g] += 1
    return counts


def _jitter_spec(template: PhantomSpec, grade: str, rng: np.random.Generator) -> PhantomSpec:
    adc_j = 1.0 + rng.uniform(-_JITTER, _JITTER)
    rad_j = 1.0 + rng.uniform(-_JITTER, _JITTER)
    tumor_adc = float(np.clip(template.tumor_adc * GRADE_ADC_SCALE[grade] * adc_j,
                              1e-5, 0.0099))
    radii = np.asarray(template.tumor_radii) * GRADE_RADIUS_SCALE[grade] * rad_j
    center = np.asarray(template.tumor_center, dtype=np.float64)
    # nudge the centre without letting the ellipsoid poke outside the grid
    dims = np.asarray(template.dims, dtype=np.float64)
    wiggle = np.minimum(radii * 0.25, np.minimum(center - radii, dims - 1 - center - radii))
    wiggle = np.maximum(wiggle, 0.0)
    center = center + rng.uniform(-1.0, 1.0, size=3) * wiggle
    return replace(template, tumor_adc=tumor_adc, tumor_radii=tuple(radii),
                   tumor_center=tuple(center))


def generate_cohort(template: PhantomSpec, n_patients: int,
                    grade_mix: dict[str, float]):
    """Generate ``n_patients`` phantoms with grades drawn from ``grade_mix``.

    Returns ``(patients, manifest)``; manifest ``cube_path`` entries hold the
    conventional per-patient directory name (the CLI writes stacks there).
    """
    if n_patients < 2:
        raise ValidationError(f"need at least 2 patients, got {n_patients}",
                              tag="phantom.n_patients")
    counts = allocate_counts(n_patients, grade_mix)
    grades = [g for g in GRADES for _ in range(counts[g])]

    root = np.random.SeedSequence(template.seed)
    streams = root.spawn(n_patients + 1)
    cohort_rng = np.random.Generator(np.random.Philox(streams[0]))
    cohort_rng.shuffle(grades)

    width = max(3, len(str(n_patients - 1)))
    patients = []
    rows = []
    for i, grade in enumerate(grades):
        pid = f"P{i:0{width}d}"
        patient_rng = np.random.Generator(np.random.Philox(streams[i + 1]))
        spec_i = _jitter_spec(template, grade, patient_rng)
        stack, mask, truth = _generate(spec_i, patient_rng)
        stack = replace(stack, patient_id=pid)
        patients.append(PhantomPatient(pid, grade, spec_i, stack, mask, truth))
        rows.append(ManifestRow(pid, grade, pid))
    return patients, DatasetManifest(tuple(rows))
