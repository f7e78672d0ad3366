"""Command-line entry point.

Subcommands: ``phantom gen``, ``adc fit``, ``cdis synth``, ``cdis optimize``,
``eval auc``, ``fuse``, ``export``, ``pipeline all``.  Every run writes a
``report.json`` with config/input/output digests and the run's metrics;
the artifacts are deterministic for a given config and seed.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error.  Failures print one machine-parsable line to stderr of the form
``cdiskit: <tag>: <message>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .adc import extend_stack, fit_adc
from .cdis import read_coefficients, write_coefficients
from .coeffopt import OptimizationProblem, TrainingPatient, evaluate_holdout, optimize
from .config import PipelineConfig, load_config
from .errors import (CdiskitError, ConfigError, ContractViolation, DataError,
                     NumericalError, ValidationError)
from .fusion import cdis_for_patient, export_patient, select_dwi
from .manifest import GRADES, DatasetManifest, read_manifest, write_manifest
from .metrics import delineation_auc
from .phantom import generate_cohort
from .report import (build_report, roc_figure, slice_to_pgm, trace_figure,
                     write_auc_csv, write_report, write_trace_jsonl)
from .stackio import read_patient, write_stack, write_volume_map

NATIVE = "native"
SYNTHETIC = "synthetic"


# ---------------------------------------------------------------- helpers

def _list_outputs(out_dir: Path, exclude: tuple[str, ...] = ("report.json",)) -> dict:
    files = sorted(p for p in out_dir.rglob("*") if p.is_file())
    return {p.relative_to(out_dir).as_posix(): p
            for p in files if p.name not in exclude}


def _extend(stack, synthetic_bvalues):
    to_add = [b for b in synthetic_bvalues if b not in stack.bvalues]
    if not to_add:
        return stack
    return extend_stack(stack, fit_adc(stack), to_add)


def _load_cohort(manifest_path, cfg: PipelineConfig
                 ) -> tuple[DatasetManifest, list[TrainingPatient]]:
    manifest = read_manifest(manifest_path)
    base = Path(manifest_path).parent
    patients = []
    for row in manifest.rows:
        stack, mask = read_patient(base / row.cube_path)
        if mask is None:
            raise ValidationError(f"patient {row.patient_id}: no mask found under "
                                  f"{base / row.cube_path}", tag="data.missing-mask")
        patients.append(TrainingPatient(row.patient_id,
                                        _extend(stack, cfg.synthetic_bvalues), mask))
    return manifest, patients


def _provenance(cfg: PipelineConfig, channels) -> tuple[str, ...]:
    native = set(cfg.native_bvalues)
    return tuple(NATIVE if b in native else SYNTHETIC for b in channels)


def _split_cohort(patients, holdout_ids):
    wanted = set(holdout_ids)
    known = {p.patient_id for p in patients}
    missing = wanted - known
    if missing:
        raise ConfigError(f"holdout ids {sorted(missing)} not in the cohort",
                          tag="config.optimizer.holdout")
    train = [p for p in patients if p.patient_id not in wanted]
    held = [p for p in patients if p.patient_id in wanted]
    return train, held


def _config_inputs(args) -> dict:
    inputs = {}
    if getattr(args, "config", None):
        inputs["config"] = Path(args.config)
    return inputs


# ------------------------------------------------------------- step cores

def step_phantom(cfg: PipelineConfig, out_dir: Path) -> dict:
    patients, manifest = generate_cohort(cfg.phantom_spec(), cfg.n_patients,
                                         cfg.grade_mix)
    for patient in patients:
        write_stack(patient.stack, out_dir / patient.patient_id, mask=patient.mask)
    write_manifest(manifest, out_dir / "manifest.csv")
    return {
        "n_patients": len(patients),
        "grade_counts": {g: sum(1 for p in patients if p.grade == g) for g in GRADES},
        "dims": list(cfg.phantom_spec().dims),
        "native_bvalues": list(cfg.native_bvalues),
        "seed": cfg.seed,
    }


def step_optimize(cfg: PipelineConfig, train, coeffs_path: Path,
                  trace_path: Path | None, fig_path: Path | None):
    problem = OptimizationProblem(
        patients=tuple(train), channels=cfg.channels,
        objective_mode=cfg.objective_mode, bounds=cfg.bounds,
        eps_fraction=cfg.eps_fraction, p_lo=cfg.p_lo, p_hi=cfg.p_hi,
        x0=cfg.x0(), subsample_stride=cfg.subsample_stride)
    result = optimize(problem, cfg.nm_config())
    write_coefficients(result.coefficients, _provenance(cfg, cfg.channels),
                       coeffs_path)
    if trace_path is not None:
        write_trace_jsonl(result.trace, trace_path)
    if fig_path is not None:
        trace_figure(result.trace, fig_path)
    metrics = {
        "objective_mode": result.objective_mode,
        "baseline_auc": result.baseline_auc,
        "optimized_auc": result.objective_value,
        "per_patient_auc": {pid: auc for pid, auc in result.per_patient_auc},
        "coefficients": {f"{b:g}": rho for b, rho in
                         zip(result.coefficients.channel_bvalues,
                             result.coefficients.rho)},
        "iterations": result.iterations,
        "n_evals": result.n_evals,
        "n_restarts": result.n_restarts,
        "reason": result.reason,
    }
    return result, metrics


def step_eval(cfg: PipelineConfig, patients, coeffs, out_dir: Path,
              stem: str = "per_patient_auc"):
    rows = []
    curves = []
    for patient in sorted(patients, key=lambda p: p.patient_id):
        volume = cdis_for_patient(patient.stack, coeffs, cfg.eps_fraction,
                                  cfg.p_lo, cfg.p_hi)
        roc = delineation_auc(volume, patient.mask)
        rows.append((patient.patient_id, roc.auc))
        curves.append((patient.patient_id, roc.points))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_auc_csv(out_dir / f"{stem}.csv", rows)
    roc_figure(curves, out_dir / "roc.png")
    mean_auc = sum(auc for _, auc in rows) / len(rows)
    return {"mean_auc": mean_auc, "per_patient_auc": dict(rows)}


def step_fuse(cfg: PipelineConfig, manifest: DatasetManifest, patients,
              coeffs, mode: str, out_dir: Path, workers: int) -> dict:
    by_id = {p.patient_id: p for p in patients}

    def export_one(row):
        patient = by_id[row.patient_id]
        volume = cdis_for_patient(patient.stack, coeffs, cfg.eps_fraction,
                                  cfg.p_lo, cfg.p_hi)
        return export_patient(
            row.patient_id, row.grade, volume, patient.stack, patient.mask,
            mode, out_dir, dwi_bvalues=cfg.fusion_dwi_bvalues,
            include_inputs=cfg.include_inputs, target_dims=cfg.target_dims,
            export_mask=cfg.export_mask)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(export_one, manifest.rows))
    else:
        rows = [export_one(row) for row in manifest.rows]
    write_manifest(DatasetManifest(tuple(rows)), out_dir / "manifest.csv")
    return {"n_cubes": len(rows), "mode": mode, "target_dims": list(cfg.target_dims)}


# ------------------------------------------------------------ subcommands

def cmd_phantom_gen(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = step_phantom(cfg, out_dir)
    report = build_report("phantom gen", cfg.raw, _config_inputs(args),
                          _list_outputs(out_dir), metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_adc_fit(args) -> int:
    cfg = load_config(args.config)
    stack, _ = read_patient(args.patient)
    adc_map = fit_adc(stack)
    out_dir = Path(args.out)
    write_volume_map({"adc": adc_map.adc, "s0": adc_map.s0,
                      "fit_mask": adc_map.fit_mask.as_volume()}, out_dir)
    inside = adc_map.fit_mask.data == 1
    metrics = {
        "n_fit_voxels": int(inside.sum()),
        "mean_adc": float(adc_map.adc.data[inside].mean()) if inside.any() else 0.0,
        "native_bvalues": [stack.bvalues[i] for i in stack.native_indices()],
    }
    report = build_report("adc fit", cfg.raw, _config_inputs(args),
                          _list_outputs(out_dir), metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_cdis_synth(args) -> int:
    cfg = load_config(args.config)
    stack, mask = read_patient(args.patient)
    extended = _extend(stack, cfg.synthetic_bvalues)
    out_dir = Path(args.out)
    write_stack(extended, out_dir, mask=mask)
    metrics = {
        "bvalues": list(extended.bvalues),
        "provenance": list(extended.provenance),
    }
    report = build_report("cdis synth", cfg.raw, _config_inputs(args),
                          _list_outputs(out_dir), metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_cdis_optimize(args) -> int:
    cfg = load_config(args.config)
    manifest, patients = _load_cohort(args.cohort, cfg)
    train, held = _split_cohort(patients, cfg.holdout_ids)
    coeffs_path = Path(args.out)
    out_dir = coeffs_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = Path(args.trace) if args.trace else None
    result, metrics = step_optimize(cfg, train, coeffs_path, trace_path,
                                    out_dir / "trace.png")
    if held:
        holdout = evaluate_holdout(result.coefficients, held,
                                   eps_fraction=cfg.eps_fraction,
                                   p_lo=cfg.p_lo, p_hi=cfg.p_hi)
        metrics["holdout_auc"] = {pid: auc for pid, auc in holdout}
    inputs = _config_inputs(args)
    inputs["cohort"] = Path(args.cohort)
    outputs = {coeffs_path.name: coeffs_path, "trace.png": out_dir / "trace.png"}
    if trace_path is not None:
        outputs[trace_path.name] = trace_path
    report = build_report("cdis optimize", cfg.raw, inputs, outputs, metrics,
                          out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_eval_auc(args) -> int:
    cfg = load_config(args.config)
    manifest, patients = _load_cohort(args.cohort, cfg)
    coeffs, _ = read_coefficients(args.coeffs)
    out_dir = Path(args.out)
    metrics = step_eval(cfg, patients, coeffs, out_dir)
    inputs = _config_inputs(args)
    inputs["cohort"] = Path(args.cohort)
    inputs["coeffs"] = Path(args.coeffs)
    report = build_report("eval auc", cfg.raw, inputs, _list_outputs(out_dir),
                          metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_fuse(args) -> int:
    cfg = load_config(args.config)
    manifest, patients = _load_cohort(args.cohort, cfg)
    coeffs, _ = read_coefficients(args.coeffs)
    mode = args.mode if args.mode else cfg.fuse_mode
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = step_fuse(cfg, manifest, patients, coeffs, mode, out_dir,
                        args.workers)
    inputs = _config_inputs(args)
    inputs["cohort"] = Path(args.cohort)
    inputs["coeffs"] = Path(args.coeffs)
    report = build_report("fuse", cfg.raw, inputs, _list_outputs(out_dir),
                          metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def _parse_dump_slice(text: str) -> int:
    if not text.startswith("z="):
        raise ConfigError(f"--dump-slice expects z=<index>, got {text!r}",
                          tag="config.dump-slice")
    try:
        return int(text[2:])
    except ValueError:
        raise ConfigError(f"--dump-slice expects an integer slice, got {text!r}",
                          tag="config.dump-slice") from None


def cmd_export(args) -> int:
    cfg = load_config(args.config)
    if args.grade not in GRADES:
        raise ConfigError(f"grade must be one of {GRADES}, got {args.grade!r}",
                          tag="config.export.grade")
    stack, mask = read_patient(args.patient)
    if mask is None:
        raise ValidationError(f"no mask found under {args.patient}",
                              tag="data.missing-mask")
    patient_id = args.patient_id or Path(args.patient).name
    extended = _extend(stack, cfg.synthetic_bvalues)
    coeffs, _ = read_coefficients(args.coeffs)
    volume = cdis_for_patient(extended, coeffs, cfg.eps_fraction, cfg.p_lo, cfg.p_hi)
    out_dir = Path(args.out)
    mode = args.mode if args.mode else cfg.fuse_mode
    row = export_patient(patient_id, args.grade, volume, extended, mask, mode,
                         out_dir, dwi_bvalues=cfg.fusion_dwi_bvalues,
                         include_inputs=cfg.include_inputs,
                         target_dims=cfg.target_dims, export_mask=cfg.export_mask)
    metrics = {"patient_id": patient_id, "grade": args.grade, "mode": mode,
               "cube": row.cube_path}
    if args.dump_slice:
        z = _parse_dump_slice(args.dump_slice)
        dwi_name, dwi = select_dwi(extended, cfg.fusion_dwi_bvalues)[0]
        slice_to_pgm(volume.signal.data, z, out_dir / f"{patient_id}_cdis_z{z}.pgm")
        slice_to_pgm(dwi.data, z, out_dir / f"{patient_id}_{dwi_name}_z{z}.pgm")
        slice_to_pgm(mask.data.astype("float64"), z,
                     out_dir / f"{patient_id}_mask_z{z}.pgm")
        metrics["dump_slice"] = z
    inputs = _config_inputs(args)
    inputs["coeffs"] = Path(args.coeffs)
    report = build_report("export", cfg.raw, inputs, _list_outputs(out_dir),
                          metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


def cmd_pipeline_all(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data_dir = out_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    phantom_metrics = step_phantom(cfg, data_dir)

    manifest, patients = _load_cohort(data_dir / "manifest.csv", cfg)
    train, held = _split_cohort(patients, cfg.holdout_ids)

    coeffs_path = out_dir / "coeffs.json"
    result, opt_metrics = step_optimize(cfg, train, coeffs_path, None,
                                        out_dir / "trace.png")
    if held:
        holdout = evaluate_holdout(result.coefficients, held,
                                   eps_fraction=cfg.eps_fraction,
                                   p_lo=cfg.p_lo, p_hi=cfg.p_hi)
        opt_metrics["holdout_auc"] = {pid: auc for pid, auc in holdout}

    eval_metrics = step_eval(cfg, patients, result.coefficients, out_dir / "eval")

    cubes_dir = out_dir / "cubes"
    cubes_dir.mkdir(parents=True, exist_ok=True)
    fuse_metrics = step_fuse(cfg, manifest, patients, result.coefficients,
                             cfg.fuse_mode, cubes_dir, args.workers)

    metrics = {"phantom": phantom_metrics, "optimize": opt_metrics,
               "eval": eval_metrics, "fuse": fuse_metrics}
    report = build_report("pipeline all", cfg.raw, _config_inputs(args),
                          _list_outputs(out_dir), metrics, out_dir)
    write_report(out_dir / "report.json", report)
    return 0


# ----------------------------------------------------------------- parser

def _default_workers() -> int:
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdiskit",
        description="Correlated diffusion imaging toolkit: phantom cohorts, "
                    "ADC fitting, coefficient optimization, fusion, export.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="TOML config file (defaults built in)")
        return p

    phantom = sub.add_parser("phantom", help="synthetic cohort generation")
    psub = phantom.add_subparsers(dest="subcommand", required=True)
    gen = with_config(psub.add_parser("gen", help="generate a phantom cohort"))
    gen.add_argument("--out", required=True, help="output data directory")
    gen.set_defaults(func=cmd_phantom_gen)

    adc = sub.add_parser("adc", help="diffusion model fitting")
    asub = adc.add_subparsers(dest="subcommand", required=True)
    fit = with_config(asub.add_parser("fit", help="fit ADC/S0 for one patient"))
    fit.add_argument("--patient", required=True, help="patient stack directory")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_adc_fit)

    cdis_p = sub.add_parser("cdis", help="signal synthesis and optimization")
    csub = cdis_p.add_subparsers(dest="subcommand", required=True)
    synth = with_config(csub.add_parser("synth",
                                        help="extend a stack with synthetic b-values"))
    synth.add_argument("--patient", required=True)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_cdis_synth)
    opt = with_config(csub.add_parser("optimize",
                                      help="tune mixing exponents on a cohort"))
    opt.add_argument("--cohort", required=True, help="manifest CSV")
    opt.add_argument("--out", required=True, help="coefficients JSON to write")
    opt.add_argument("--trace", help="also write the simplex trace as JSON lines")
    opt.set_defaults(func=cmd_cdis_optimize)

    eval_p = sub.add_parser("eval", help="scoring")
    esub = eval_p.add_subparsers(dest="subcommand", required=True)
    eauc = with_config(esub.add_parser("auc", help="per-patient delineation AUC"))
    eauc.add_argument("--cohort", required=True)
    eauc.add_argument("--coeffs", required=True)
    eauc.add_argument("--out", required=True, help="output directory")
    eauc.set_defaults(func=cmd_eval_auc)

    fuse_p = with_config(sub.add_parser("fuse", help="export fused cubes for a cohort"))
    fuse_p.add_argument("--cohort", required=True)
    fuse_p.add_argument("--coeffs", required=True)
    fuse_p.add_argument("--mode", choices=["stack", "product"],
                        help="override fusion mode from config")
    fuse_p.add_argument("--out", required=True)
    fuse_p.add_argument("--workers", type=int, default=_default_workers())
    fuse_p.set_defaults(func=cmd_fuse)

    export = with_config(sub.add_parser("export", help="export one patient cube"))
    export.add_argument("--patient", required=True)
    export.add_argument("--grade", required=True)
    export.add_argument("--coeffs", required=True)
    export.add_argument("--out", required=True)
    export.add_argument("--mode", choices=["stack", "product"])
    export.add_argument("--patient-id", help="defaults to the directory name")
    export.add_argument("--dump-slice", metavar="z=K",
                        help="write PGM slices of cdis/dwi/mask")
    export.set_defaults(func=cmd_export)

    pipe = sub.add_parser("pipeline", help="end-to-end runs")
    pipesub = pipe.add_subparsers(dest="subcommand", required=True)
    pall = with_config(pipesub.add_parser("all",
                                          help="phantom + optimize + eval + fuse"))
    pall.add_argument("--out", help="run directory (default from config io.out_dir)")
    pall.add_argument("--workers", type=int, default=_default_workers())
    pall.set_defaults(func=cmd_pipeline_all)

    return parser


_EXIT_CODES: tuple[tuple[type, int], ...] = (
    (ConfigError, 2),
    (DataError, 3),
    (NumericalError, 4),
    (ContractViolation, 4),
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CdiskitError as err:
        print(f"cdiskit: {err}", file=sys.stderr)
        for klass, code in _EXIT_CODES:
            if isinstance(err, klass):
                return code
        return 4
    except OSError as err:
        print(f"cdiskit: io.error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
