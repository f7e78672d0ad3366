"""Correlated diffusion imaging toolkit.

Synthesizes diffusion-weighted signals from a voxelwise monoexponential
decay fit, mixes native and synthetic channels into a calibrated
correlated-diffusion map, tunes the per-channel mixing exponents by
maximizing tumour delineation AUC with a from-scratch Nelder-Mead
simplex, and exports standardized multi-channel cubes for downstream
grading models.
"""

__version__ = "0.1.0"

from .adc import AdcMap, extend_stack, fit_adc, synthesize_signal
from .cdis import (CalibrationRecord, CdisVolume, CoefficientVector, calibrate,
                   cdis, mix, read_coefficients, write_coefficients)
from .coeffopt import (OptimizationProblem, OptimizationResult, TrainingPatient,
                       evaluate_holdout, objective, optimize)
from .config import PipelineConfig, load_config
from .cube import STANDARD_DIMS, StandardCube, read_cube, write_cube
from .errors import (CdiskitError, ConfigError, ContractViolation, CorruptionError,
                     DataError, NumericalError, ParseError, TruncatedFileError,
                     UndefinedAucError, UnsupportedFormatError, ValidationError)
from .fusion import (FUSE_MODES, export_patient, fuse, resample_mask,
                     resample_volume)
from .manifest import (GRADES, DatasetManifest, ManifestRow, binary_label,
                       read_manifest, write_manifest)
from .metrics import (ClassificationReport, RocResult, auc_oracle, auc_rank,
                      classify_report, delineation_auc)
from .neldermead import NmConfig, NmResult, SimplexState, minimize, project_bounds
from .nifti import read_nifti, write_nifti
from .phantom import PhantomPatient, PhantomSpec, generate_cohort, generate_patient
from .volume import DwiStack, MaskVolume, Volume3D

__all__ = [
    "AdcMap", "CalibrationRecord", "CdisVolume", "CdiskitError",
    "ClassificationReport", "CoefficientVector", "ConfigError",
    "ContractViolation", "CorruptionError", "DataError", "DatasetManifest",
    "DwiStack", "FUSE_MODES", "GRADES", "ManifestRow", "MaskVolume",
    "NmConfig", "NmResult", "NumericalError", "OptimizationProblem",
    "OptimizationResult", "ParseError", "PhantomPatient", "PhantomSpec",
    "PipelineConfig", "RocResult", "STANDARD_DIMS", "SimplexState",
    "StandardCube", "TrainingPatient", "TruncatedFileError",
    "UndefinedAucError", "UnsupportedFormatError", "ValidationError",
    "Volume3D", "auc_oracle", "auc_rank", "binary_label", "calibrate", "cdis",
    "classify_report", "delineation_auc", "evaluate_holdout", "export_patient",
    "extend_stack", "fit_adc", "fuse", "generate_cohort", "generate_patient",
    "load_config", "minimize", "mix", "objective", "optimize",
    "project_bounds", "read_coefficients", "read_cube", "read_manifest",
    "read_nifti", "resample_mask", "resample_volume", "synthesize_signal",
    "write_coefficients", "write_cube", "write_manifest", "write_nifti",
]
