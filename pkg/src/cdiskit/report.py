"""Run reports, delimited outputs, figures, and PGM slice dumps.

Every CLI subcommand writes a ``report.json`` describing what it consumed
and produced: a digest of the effective configuration, digests of the
named input files, digests of every artifact written, and the metrics of
the run.  Reports contain no timestamps or absolute paths, so re-running
with the same inputs reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

import numpy as np  # noqa: E402

from .errors import ConfigError  # noqa: E402


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def config_digest(tree: dict) -> str:
    canon = json.dumps(tree, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _digest_entries(paths: dict[str, Path], base: Path | None) -> dict:
    out = {}
    for name, path in sorted(paths.items()):
        path = Path(path)
        shown = path.relative_to(base).as_posix() if base is not None else path.name
        out[name] = {"path": shown, "sha256": sha256_file(path)}
    return out


def build_report(subcommand: str, config_tree: dict, inputs: dict[str, Path],
                 outputs: dict[str, Path], metrics: dict,
                 out_dir: Path | None = None) -> dict:
    """Assemble the deterministic run-report payload."""
    return {
        "tool": "cdiskit",
        "subcommand": subcommand,
        "config_digest": config_digest(config_tree),
        "inputs": _digest_entries(inputs, None),
        "outputs": _digest_entries(outputs, out_dir),
        "metrics": metrics,
    }


def write_report(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def write_auc_csv(path, rows) -> None:
    """Delimited per-patient AUC table: patient_id, auc."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "auc"])
        for pid, auc in rows:
            writer.writerow([pid, f"{auc:.12g}"])


def roc_figure(curves, path, title: str = "Tumour delineation ROC") -> None:
    """Overlay ROC curves; ``curves`` is a list of (label, points) pairs."""
    fig, ax = plt.subplots(figsize=(5, 5), dpi=100)
    for label, points in curves:
        pts = np.asarray(points)
        ax.plot(pts[:, 0], pts[:, 1], linewidth=1.2, label=label)
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_title(title)
    if len(curves) <= 12:
        ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path)
    plt.close(fig)


def trace_figure(trace, path, title: str = "Coefficient search") -> None:
    """Best aggregate AUC against simplex iteration."""
    iterations = [entry.iteration for entry in trace]
    best_auc = [1.0 - entry.best_value for entry in trace]
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    ax.step(iterations, best_auc, where="post", linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("best mean AUC")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)


def write_trace_jsonl(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in trace:
            fh.write(json.dumps({"iteration": entry.iteration, "op": entry.op,
                                 "best_value": entry.best_value}) + "\n")


def write_pgm(path, image: np.ndarray) -> None:
    """Binary 8-bit PGM (P5); ``image`` is (rows, cols) uint8."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ConfigError(f"PGM image must be 2-D, got shape {image.shape}",
                          tag="config.pgm.shape")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def slice_to_pgm(data: np.ndarray, z: int, path) -> None:
    """Dump slice z of an (nx, ny, nz) volume, scaled over the whole volume."""
    if not 0 <= z < data.shape[2]:
        raise ConfigError(f"slice z={z} outside volume with {data.shape[2]} slices",
                          tag="config.dump-slice.z")
    lo = float(data.min())
    hi = float(data.max())
    sl = data[:, :, z].astype(np.float64)
    if hi > lo:
        scaled = np.round((sl - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(sl)
    write_pgm(path, scaled.astype(np.uint8).T)  # rows = y, cols = x
