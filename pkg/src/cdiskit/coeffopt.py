"""Coefficient search: tune the per-channel mixing exponents on a cohort.

The objective handed to the simplex minimizer is ``1 - aggregate AUC``,
where the aggregate is either the unweighted mean of per-patient tumour
delineation AUCs (default; a small tumour counts as much as a large one)
or a single AUC over all patients' voxels pooled together.

Exponent vectors are scale-degenerate: raising every voxel's mixed value
to a power is monotone, so rho and lambda*rho produce identical voxel
ranks, identical calibration clip sets, and therefore identical AUC.
Reported coefficients are normalized to max |rho_i| = 1 to make runs
comparable; the normalization is asserted not to move the objective.

The degeneracy is exact per patient, hence exact for mean_patient_auc.
Pooled AUC compares voxels across patients whose calibrations are
different monotone maps, so cross-patient pair order is only
approximately scale-invariant; the pooled normalization guard is
correspondingly looser.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .cdis import (DEFAULT_BOUNDS, DEFAULT_EPS_FRACTION, DEFAULT_P_HI, DEFAULT_P_LO,
                   CoefficientVector, cdis, default_eps)
from .errors import ConfigError, ContractViolation, UndefinedAucError, ValidationError
from .metrics import auc_rank
from .neldermead import NmConfig, TraceEntry, minimize
from .volume import DwiStack, MaskVolume, check_mask_matches

OBJECTIVE_MODES = ("mean_patient_auc", "pooled_auc")

# max objective drift tolerated when rescaling rho to max-abs 1
NORMALIZE_TOL = {"mean_patient_auc": 1e-9, "pooled_auc": 1e-6}


@dataclass(frozen=True)
class TrainingPatient:
    patient_id: str
    stack: DwiStack
    mask: MaskVolume

    def __post_init__(self):
        check_mask_matches(self.mask, self.stack.dims)
        labels = self.mask.flat()
        if labels.min() == labels.max():
            raise ValidationError(
                f"patient {self.patient_id}: mask is single-class, "
                "delineation AUC would be undefined", tag="opt.single-class")


@dataclass(frozen=True)
class OptimizationProblem:
    """Training cohort plus everything the objective needs to score it."""

    patients: tuple[TrainingPatient, ...]
    channels: tuple[float, ...]
    objective_mode: str = "mean_patient_auc"
    bounds: tuple[float, float] = DEFAULT_BOUNDS
    eps_fraction: float = DEFAULT_EPS_FRACTION
    p_lo: float = DEFAULT_P_LO
    p_hi: float = DEFAULT_P_HI
    x0: CoefficientVector | None = None
    subsample_stride: int = 1  # >1 scores every k-th voxel (documented approximation)

    def __post_init__(self):
        patients = tuple(sorted(self.patients, key=lambda p: p.patient_id))
        if not patients:
            raise ValidationError("need at least one training patient", tag="opt.empty")
        ids = [p.patient_id for p in patients]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate patient ids in training set: {ids}",
                                  tag="opt.duplicate-id")
        channels = tuple(float(b) for b in self.channels)
        for p in patients:
            if p.stack.bvalues != channels:
                raise ValidationError(
                    f"patient {p.patient_id}: stack b-values {p.stack.bvalues} do not "
                    f"match problem channels {channels}", tag="opt.channels")
        if self.objective_mode not in OBJECTIVE_MODES:
            raise ConfigError(f"objective_mode must be one of {OBJECTIVE_MODES}, "
                              f"got {self.objective_mode!r}", tag="config.opt.mode")
        if not (isinstance(self.subsample_stride, int) and self.subsample_stride >= 1):
            raise ConfigError(f"subsample_stride must be an integer >= 1, "
                              f"got {self.subsample_stride!r}", tag="config.opt.stride")
        x0 = self.x0
        if x0 is None:
            x0 = CoefficientVector((1.0,) * len(channels), channels, self.bounds)
        elif x0.channel_bvalues != channels or x0.bounds != tuple(self.bounds):
            raise ValidationError("x0 channels/bounds do not match the problem",
                                  tag="opt.x0")
        object.__setattr__(self, "patients", patients)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "x0", x0)

    @property
    def n_channels(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class OptimizationResult:
    coefficients: CoefficientVector  # normalized to max |rho| = 1
    objective_value: float           # aggregate AUC at the reported coefficients
    baseline_auc: float              # aggregate AUC at x0
    per_patient_auc: tuple[tuple[str, float], ...]
    trace: tuple[TraceEntry, ...]
    iterations: int
    n_evals: int
    n_restarts: int
    reason: str
    objective_mode: str

    def __post_init__(self):
        tol = NORMALIZE_TOL.get(self.objective_mode, 1e-6)
        if self.objective_value < self.baseline_auc - tol:
            raise ContractViolation(
                f"best-ever objective {self.objective_value} fell below baseline "
                f"{self.baseline_auc}", tag="opt.best-ever")
        for pid, auc in self.per_patient_auc:
            if not 0.0 <= auc <= 1.0:
                raise ContractViolation(f"patient {pid}: AUC {auc} outside [0, 1]",
                                        tag="opt.auc-range")


def _patient_scores(patient: TrainingPatient, coeffs: CoefficientVector,
                    eps_fraction: float, p_lo: float, p_hi: float,
                    stride: int) -> tuple[np.ndarray, np.ndarray]:
    eps = default_eps(patient.stack, eps_fraction)
    volume = cdis(patient.stack, coeffs, eps=eps, p_lo=p_lo, p_hi=p_hi)
    scores = volume.signal.flat()[::stride]
    labels = patient.mask.flat()[::stride]
    return scores, labels


def _patient_auc(patient: TrainingPatient, coeffs: CoefficientVector,
                 eps_fraction: float, p_lo: float, p_hi: float, stride: int) -> float:
    scores, labels = _patient_scores(patient, coeffs, eps_fraction, p_lo, p_hi, stride)
    try:
        return auc_rank(scores, labels).auc
    except UndefinedAucError as err:
        raise UndefinedAucError(f"patient {patient.patient_id}: {err.message}",
                                tag=err.tag) from None


def per_patient_auc(problem: OptimizationProblem,
                    rho: CoefficientVector) -> tuple[tuple[str, float], ...]:
    """Delineation AUC per training patient, sorted by patient id."""
    return tuple((p.patient_id,
                  _patient_auc(p, rho, problem.eps_fraction, problem.p_lo,
                               problem.p_hi, problem.subsample_stride))
                 for p in problem.patients)


def aggregate_auc(problem: OptimizationProblem, rho: CoefficientVector) -> float:
    """The quantity the optimizer maximizes, per the configured mode."""
    if len(rho) != problem.n_channels:
        raise ContractViolation(f"{len(rho)} coefficients for "
                                f"{problem.n_channels} channels", tag="opt.length")
    if problem.objective_mode == "mean_patient_auc":
        aucs = [auc for _, auc in per_patient_auc(problem, rho)]
        return float(np.mean(aucs))
    pooled_scores = []
    pooled_labels = []
    for p in problem.patients:
        scores, labels = _patient_scores(p, rho, problem.eps_fraction,
                                         problem.p_lo, problem.p_hi,
                                         problem.subsample_stride)
        pooled_scores.append(scores)
        pooled_labels.append(labels)
    return auc_rank(np.concatenate(pooled_scores), np.concatenate(pooled_labels)).auc


def objective(problem: OptimizationProblem, rho: CoefficientVector) -> float:
    """1 - aggregate AUC; the simplex minimizes this."""
    return 1.0 - aggregate_auc(problem, rho)


def _normalize(rho: np.ndarray) -> np.ndarray:
    top = float(np.abs(rho).max())
    return rho / top if top > 0 else rho


def optimize(problem: OptimizationProblem,
             nm: NmConfig | None = None) -> OptimizationResult:
    """Run the simplex over the exponents and report normalized best-ever."""
    base = nm if nm is not None else NmConfig()
    cfg = dataclasses.replace(base, bounds=(problem.bounds,) * problem.n_channels)

    def f(x: np.ndarray) -> float:
        return objective(problem, CoefficientVector(tuple(x), problem.channels,
                                                    problem.bounds))

    x0 = problem.x0.as_array()
    baseline = aggregate_auc(problem, problem.x0)
    result = minimize(f, x0, cfg)

    rho_n = _normalize(result.x)
    # widen only when normalization leaves the optimization box (lo > 0 cases)
    box = (min(problem.bounds[0], float(rho_n.min())),
           max(problem.bounds[1], float(rho_n.max())))
    coeffs = CoefficientVector(tuple(rho_n), problem.channels, box)
    best_auc = aggregate_auc(problem, coeffs)
    if abs((1.0 - best_auc) - result.value) > NORMALIZE_TOL[problem.objective_mode]:
        raise ContractViolation(
            f"normalization moved the objective: {result.value} -> {1.0 - best_auc}",
            tag="opt.normalize")

    return OptimizationResult(
        coefficients=coeffs,
        objective_value=best_auc,
        baseline_auc=baseline,
        per_patient_auc=per_patient_auc(problem, coeffs),
        trace=result.trace,
        iterations=result.iterations,
        n_evals=result.n_evals,
        n_restarts=result.n_restarts,
        reason=result.reason,
        objective_mode=problem.objective_mode,
    )


def evaluate_holdout(coefficients: CoefficientVector,
                     patients: tuple[TrainingPatient, ...] | list[TrainingPatient],
                     eps_fraction: float = DEFAULT_EPS_FRACTION,
                     p_lo: float = DEFAULT_P_LO, p_hi: float = DEFAULT_P_HI,
                     subsample_stride: int = 1) -> tuple[tuple[str, float], ...]:
    """Score fixed coefficients on unseen patients; no optimization."""
    ordered = sorted(patients, key=lambda p: p.patient_id)
    return tuple((p.patient_id,
                  _patient_auc(p, coefficients, eps_fraction, p_lo, p_hi,
                               subsample_stride))
                 for p in ordered)
