"""Declarative pipeline configuration: TOML file + environment overrides.

Precedence: built-in defaults < config file < ``CDIS_<SECTION>_<KEY>``
environment variables (section names contain no underscores, so the first
underscore after the prefix splits section from key; ``CDIS_SEED`` covers
the one top-level scalar).  Override values are parsed as TOML literals,
falling back to plain strings, so ``CDIS_OPTIMIZER_MAX_ITER=40`` arrives
as an integer and ``CDIS_FUSION_MODE=product`` as a string.

Range checks beyond simple shape live with the owning modules; loading
eagerly constructs their objects so a bad config fails at run start.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cdis import CoefficientVector
from .cube import STANDARD_DIMS
from .errors import ConfigError
from .manifest import GRADES
from .neldermead import NmConfig
from .phantom import PhantomSpec

ENV_PREFIX = "CDIS_"

_DEFAULTS: dict = {
    "seed": 0,
    "bvalues": {
        "native": [0.0, 100.0, 600.0, 800.0],
        "synthetic": [1000.0],
    },
    "phantom": {
        "n_patients": 6,
        "dims": [32, 32, 8],
        "spacing": [1.5, 1.5, 3.0],
        "background_adc": 2.0e-3,
        "tumor_adc": 1.0e-3,
        "s0_mean": 1000.0,
        "tumor_radii": [5.0, 5.0, 2.2],
        "noise_sigma": 0.02,
        # cohort mix follows the 10/99/200 grade split of the motivating dataset
        "grade_mix": {"I": 10.0, "II": 99.0, "III": 200.0},
    },
    "cdis": {
        "eps_fraction": 1e-6,
        "p_lo": 1.0,
        "p_hi": 99.0,
        "bounds": [0.0, 4.0],
        "x0": [],  # empty list = all-ones start
    },
    "optimizer": {
        "alpha": 1.0,
        "gamma": 2.0,
        "beta": 0.5,
        "delta": 0.5,
        "init_step": 0.25,
        "tol_f": 1e-6,
        "tol_x": 1e-6,
        "max_iter": 0,   # 0 = module default (500 * n)
        "max_evals": 0,  # 0 = unbounded
        "max_restarts": 2,
        "objective_mode": "mean_patient_auc",
        "subsample_stride": 1,
        "holdout": [],   # patient ids excluded from training, scored afterwards
    },
    "fusion": {
        "mode": "stack",
        "dwi_bvalues": [],  # empty = highest native b
        "include_inputs": False,
        "export_mask": False,
        "target_dims": list(STANDARD_DIMS),
    },
    "io": {
        "out_dir": "run",
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}", tag="config.unknown-key")
        if isinstance(base[key], dict) and key != "grade_mix":
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table", tag="config.type")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _parse_env_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def _env_overrides(environ) -> dict:
    tree: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if rest == "SEED":
            tree["seed"] = _parse_env_value(raw)
            continue
        section, _, key = rest.partition("_")
        section = section.lower()
        key = key.lower()
        if section not in _DEFAULTS or not isinstance(_DEFAULTS[section], dict):
            raise ConfigError(f"environment override {name} names unknown section "
                              f"{section!r}", tag="config.env")
        if key not in _DEFAULTS[section]:
            raise ConfigError(f"environment override {name} names unknown key "
                              f"{section}.{key}", tag="config.env")
        tree.setdefault(section, {})[key] = _parse_env_value(raw)
    return tree


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view over the merged configuration tree."""

    raw: dict = field(repr=False)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def native_bvalues(self) -> tuple[float, ...]:
        return tuple(float(b) for b in self.raw["bvalues"]["native"])

    @property
    def synthetic_bvalues(self) -> tuple[float, ...]:
        return tuple(float(b) for b in self.raw["bvalues"]["synthetic"])

    @property
    def channels(self) -> tuple[float, ...]:
        """All scoring channels (native + synthetic), ascending."""
        return tuple(sorted(set(self.native_bvalues) | set(self.synthetic_bvalues)))

    @property
    def eps_fraction(self) -> float:
        return float(self.raw["cdis"]["eps_fraction"])

    @property
    def p_lo(self) -> float:
        return float(self.raw["cdis"]["p_lo"])

    @property
    def p_hi(self) -> float:
        return float(self.raw["cdis"]["p_hi"])

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.raw["cdis"]["bounds"]
        return (float(lo), float(hi))

    def x0(self) -> CoefficientVector:
        values = self.raw["cdis"]["x0"]
        if not values:
            values = [1.0] * len(self.channels)
        if len(values) != len(self.channels):
            raise ConfigError(f"cdis.x0 has {len(values)} entries for "
                              f"{len(self.channels)} channels", tag="config.cdis.x0")
        return CoefficientVector(tuple(float(v) for v in values), self.channels,
                                 self.bounds)

    @property
    def objective_mode(self) -> str:
        return str(self.raw["optimizer"]["objective_mode"])

    @property
    def subsample_stride(self) -> int:
        return int(self.raw["optimizer"]["subsample_stride"])

    @property
    def holdout_ids(self) -> tuple[str, ...]:
        return tuple(str(p) for p in self.raw["optimizer"]["holdout"])

    def nm_config(self) -> NmConfig:
        opt = self.raw["optimizer"]
        step = opt["init_step"]
        return NmConfig(
            alpha=float(opt["alpha"]), gamma=float(opt["gamma"]),
            beta=float(opt["beta"]), delta=float(opt["delta"]),
            init_step=(tuple(float(s) for s in step)
                       if isinstance(step, list) else float(step)),
            tol_f=float(opt["tol_f"]), tol_x=float(opt["tol_x"]),
            max_iter=int(opt["max_iter"]) or None,
            max_evals=int(opt["max_evals"]) or None,
            max_restarts=int(opt["max_restarts"]),
        )

    @property
    def fuse_mode(self) -> str:
        return str(self.raw["fusion"]["mode"])

    @property
    def fusion_dwi_bvalues(self) -> tuple[float, ...] | None:
        values = self.raw["fusion"]["dwi_bvalues"]
        return tuple(float(b) for b in values) if values else None

    @property
    def include_inputs(self) -> bool:
        return bool(self.raw["fusion"]["include_inputs"])

    @property
    def export_mask(self) -> bool:
        return bool(self.raw["fusion"]["export_mask"])

    @property
    def target_dims(self) -> tuple[int, int, int]:
        dims = self.raw["fusion"]["target_dims"]
        if len(dims) != 3:
            raise ConfigError(f"fusion.target_dims needs 3 entries, got {dims}",
                              tag="config.fusion.dims")
        return tuple(int(d) for d in dims)

    @property
    def out_dir(self) -> str:
        return str(self.raw["io"]["out_dir"])

    @property
    def grade_mix(self) -> dict[str, float]:
        """Normalized grade proportions; config values are free weights."""
        mix = self.raw["phantom"]["grade_mix"]
        unknown = set(mix) - set(GRADES)
        if unknown:
            raise ConfigError(f"phantom.grade_mix has unknown grades {sorted(unknown)}",
                              tag="config.phantom.grades")
        weights = {g: float(v) for g, v in mix.items()}
        total = sum(weights.values())
        if total <= 0 or any(w < 0 for w in weights.values()):
            raise ConfigError(f"phantom.grade_mix weights must be >= 0 with a "
                              f"positive sum, got {weights}",
                              tag="config.phantom.grades")
        return {g: w / total for g, w in weights.items()}

    @property
    def n_patients(self) -> int:
        return int(self.raw["phantom"]["n_patients"])

    def phantom_spec(self) -> PhantomSpec:
        ph = self.raw["phantom"]
        return PhantomSpec(
            dims=tuple(int(d) for d in ph["dims"]),
            spacing=tuple(float(s) for s in ph["spacing"]),
            background_adc=float(ph["background_adc"]),
            tumor_adc=float(ph["tumor_adc"]),
            s0_mean=float(ph["s0_mean"]),
            tumor_radii=tuple(float(r) for r in ph["tumor_radii"]),
            noise_sigma=float(ph["noise_sigma"]),
            bvalues=self.native_bvalues,
            seed=self.seed,
        )

    def validate(self) -> "PipelineConfig":
        """Eager range checks so a bad config fails before any work starts."""
        try:
            if not (0.0 <= self.p_lo < self.p_hi <= 100.0):
                raise ConfigError(
                    f"need 0 <= p_lo < p_hi <= 100, got ({self.p_lo}, {self.p_hi})",
                    tag="config.calibration.percentiles")
            if not self.eps_fraction > 0:
                raise ConfigError(
                    f"cdis.eps_fraction must be > 0, got {self.eps_fraction}",
                    tag="config.cdis.eps")
            if not self.native_bvalues:
                raise ConfigError("bvalues.native must not be empty",
                                  tag="config.bvalues.native")
            overlap = set(self.native_bvalues) & set(self.synthetic_bvalues)
            if overlap:
                raise ConfigError(f"synthetic b-values {sorted(overlap)} duplicate "
                                  "native ones", tag="config.bvalues.overlap")
            self.nm_config()
            self.x0()
            self.phantom_spec()
            _ = (self.seed, self.grade_mix, self.n_patients, self.target_dims,
                 self.objective_mode, self.subsample_stride, self.holdout_ids,
                 self.fuse_mode, self.fusion_dwi_bvalues, self.include_inputs,
                 self.export_mask, self.out_dir)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"config value has the wrong type: {err}",
                              tag="config.type") from None
        return self


def load_config(path=None, environ=None) -> PipelineConfig:
    """Defaults, optionally overlaid with a TOML file, then the environment."""
    tree = _DEFAULTS
    if path is not None:
        try:
            with open(path, "rb") as fh:
                loaded = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}",
                              tag="config.missing-file") from None
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"{path}: invalid TOML ({err})",
                              tag="config.toml") from None
        tree = _merge(tree, loaded)
    env = environ if environ is not None else os.environ
    tree = _merge(tree, _env_overrides(env))
    return PipelineConfig(raw=tree).validate()
