"""Leave-one-out cross-validation with pooled (micro-averaged) aggregation.

Each fold holds out one patient, trains on the rest, and records the
held-out prediction.  Folds whose training split collapses to a single
class (possible when a class has exactly one member) are skipped with an
explicit warning record instead of failing the run.  Fold seeds derive
deterministically from the run seed and the fold index, so reruns
reproduce every prediction bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

from .dataset import CubeDataset
from .errors import DataError, TrainingError
from .models import build_model
from .train import TrainConfig, predict, train_one

_FOLD_SEED_STRIDE = 1_000_003  # fold seeds: seed*stride + fold index


@dataclass(frozen=True)
class FoldResult:
    patient_id: str
    true_label: int
    predicted_label: int
    scores: tuple[float, float]

    def __post_init__(self):
        if self.true_label not in (0, 1) or self.predicted_label not in (0, 1):
            raise TrainingError(f"fold {self.patient_id}: labels must be 0/1",
                                tag="fold.labels")
        if abs(sum(self.scores) - 1.0) > 1e-6:
            raise TrainingError(f"fold {self.patient_id}: scores {self.scores} "
                                "do not sum to 1", tag="fold.scores")


@dataclass(frozen=True)
class SkippedFold:
    patient_id: str
    reason: str


@dataclass(frozen=True)
class AggregateReport:
    n_scored: int
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    sensitivity: float | None  # None when no positive cases were scored
    specificity: float | None


def aggregate_folds(folds: list[FoldResult]) -> AggregateReport:
    """Pool confusion counts over folds, then compute the ratios."""
    tp = sum(1 for f in folds if f.true_label == 1 and f.predicted_label == 1)
    tn = sum(1 for f in folds if f.true_label == 0 and f.predicted_label == 0)
    fp = sum(1 for f in folds if f.true_label == 0 and f.predicted_label == 1)
    fn = sum(1 for f in folds if f.true_label == 1 and f.predicted_label == 0)
    n = tp + tn + fp + fn
    if n == 0:
        raise TrainingError("no scored folds to aggregate", tag="loocv.empty")
    return AggregateReport(
        n_scored=n, tp=tp, tn=tn, fp=fp, fn=fn,
        accuracy=(tp + tn) / n,
        sensitivity=tp / (tp + fn) if (tp + fn) else None,
        specificity=tn / (tn + fp) if (tn + fp) else None,
    )


def loocv(dataset: CubeDataset, cfg: TrainConfig, variant: str = "toy"
          ) -> tuple[list[FoldResult], list[SkippedFold], AggregateReport]:
    if len(dataset) < 3:
        raise DataError(f"LOOCV needs at least 3 patients, got {len(dataset)}",
                        tag="loocv.too-small")
    counts = dataset.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise DataError(f"need both classes, got counts {counts}",
                        tag="loocv.single-class")

    folds: list[FoldResult] = []
    skipped: list[SkippedFold] = []
    samples = list(dataset)
    for i, held_out in enumerate(samples):
        train_split = samples[:i] + samples[i + 1:]
        if len({s.label for s in train_split}) < 2:
            reason = (f"training split single-class after holding out "
                      f"{held_out.patient_id}")
            warnings.warn(f"skipping fold: {reason}")
            skipped.append(SkippedFold(held_out.patient_id, reason))
            continue
        fold_seed = cfg.seed * _FOLD_SEED_STRIDE + i
        torch.manual_seed(fold_seed)  # model init draws from the global stream
        model = build_model(dataset.n_channels, variant)
        fold_cfg = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                               batch_size=cfg.batch_size, seed=fold_seed)
        train_one(model, train_split, fold_cfg)
        predicted, scores = predict(model, [held_out])
        folds.append(FoldResult(held_out.patient_id, held_out.label,
                                int(predicted[0]),
                                (float(scores[0, 0]), float(scores[0, 1]))))
    return folds, skipped, aggregate_folds(folds)


def results_payload(dataset: CubeDataset, cfg: TrainConfig, variant: str,
                    folds: list[FoldResult], skipped: list[SkippedFold],
                    aggregate: AggregateReport) -> dict:
    """The results.json document: per-fold records plus the pooled report."""
    return {
        "tool": "grade-harness",
        "config": {**cfg.as_dict(), "variant": variant},
        "n_samples": len(dataset),
        "n_channels": dataset.n_channels,
        "dims": list(dataset.dims),
        "folds": [{"patient_id": f.patient_id,
                   "true_label": f.true_label,
                   "predicted_label": f.predicted_label,
                   "scores": list(f.scores)} for f in folds],
        "skipped": [{"patient_id": s.patient_id, "reason": s.reason}
                    for s in skipped],
        "aggregate": {"n_scored": aggregate.n_scored,
                      "confusion": {"tp": aggregate.tp, "tn": aggregate.tn,
                                    "fp": aggregate.fp, "fn": aggregate.fn},
                      "accuracy": aggregate.accuracy,
                      "sensitivity": aggregate.sensitivity,
                      "specificity": aggregate.specificity},
    }
