"""ROC curves, AUC and classification metrics.

AUC uses the rank statistic (Mann-Whitney U with midranks for ties),

    AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos * n_neg),

where R_pos is the positive-class rank sum.  Because midranks are
half-integers, the numerator is carried as an exact integer
(``2*#{s_p > s_n} + #{s_p == s_n}``) alongside the float value, so identities
such as AUC(-s) = 1 - AUC(s) can be checked without rounding slack.

:func:`auc_oracle` recomputes the same quantity by brute-force pair
enumeration; it exists purely as an independent cross-check and must never
share code with :func:`auc_rank`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdis import CdisVolume
from .errors import ContractViolation, UndefinedAucError
from .volume import MaskVolume, check_mask_matches


@dataclass(frozen=True)
class RocResult:
    """AUC plus the ROC polyline from (0,0) to (1,1).

    ``auc_num``/``auc_den`` hold the AUC as an exact integer fraction
    (numerator doubled so ties stay integral); ``auc == auc_num / auc_den``.
    """

    auc: float
    points: np.ndarray  # shape (k, 2) of (fpr, tpr)
    n_pos: int
    n_neg: int
    auc_num: int
    auc_den: int


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ContractViolation(
            f"{scores.size} scores vs {labels.size} labels", tag="auc.length")
    if scores.size == 0:
        raise ContractViolation("empty score list", tag="auc.empty")
    if not np.isfinite(scores).all():
        raise ContractViolation("scores contain NaN/Inf", tag="auc.nonfinite")
    if not np.isin(labels, (0, 1)).all():
        raise ContractViolation("labels must be 0 or 1", tag="auc.labels")
    labels = labels.astype(np.int8)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError(
            f"AUC undefined with n_pos={n_pos}, n_neg={n_neg}")
    return scores, labels, n_pos, n_neg


def _doubled_midranks(scores: np.ndarray) -> np.ndarray:
    """2x the 1-based midrank of every score (integers even under ties)."""
    n = scores.size
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    group_start = np.r_[True, s[1:] != s[:-1]]
    first = np.flatnonzero(group_start)
    counts = np.diff(np.append(first, n))
    # tie group occupying sorted slots [a, a+c-1] has midrank (2a + c + 1)/2
    rank2_by_group = 2 * first + counts + 1
    rank2_sorted = np.repeat(rank2_by_group, counts)
    rank2 = np.empty(n, dtype=np.int64)
    rank2[order] = rank2_sorted
    return rank2


def auc_rank(scores, labels) -> RocResult:
    """Rank-based AUC and the ROC polyline from a threshold sweep."""
    scores, labels, n_pos, n_neg = _check_scores_labels(scores, labels)

    rank2 = _doubled_midranks(scores)
    r2_pos = int(rank2[labels == 1].sum())
    auc_num = r2_pos - n_pos * (n_pos + 1)
    auc_den = 2 * n_pos * n_neg
    auc = auc_num / auc_den

    # threshold sweep over unique score values, descending
    order = np.argsort(-scores, kind="stable")
    lab_desc = labels[order]
    s_desc = scores[order]
    boundary = np.r_[s_desc[1:] != s_desc[:-1], True]  # last index of each value
    tps = np.cumsum(lab_desc)[boundary]
    fps = np.cumsum(1 - lab_desc)[boundary]
    points = np.empty((tps.size + 1, 2), dtype=np.float64)
    points[0] = (0.0, 0.0)
    points[1:, 0] = fps / n_neg
    points[1:, 1] = tps / n_pos
    return RocResult(auc=auc, points=points, n_pos=n_pos, n_neg=n_neg,
                     auc_num=int(auc_num), auc_den=int(auc_den))


def auc_oracle(scores, labels) -> float:
    """Exhaustive O(n^2) pairwise AUC; the test oracle for :func:`auc_rank`."""
    scores, labels, n_pos, n_neg = _check_scores_labels(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    gt = int((pos[:, None] > neg[None, :]).sum())
    eq = int((pos[:, None] == neg[None, :]).sum())
    return (2 * gt + eq) / (2 * n_pos * n_neg)


def delineation_auc(cdis: CdisVolume, mask: MaskVolume) -> RocResult:
    """Voxel intensities scored against the binary tumour mask."""
    check_mask_matches(mask, cdis.dims)
    labels = mask.flat()
    if labels.min() == labels.max():
        raise UndefinedAucError(
            "delineation AUC needs both tumour and background voxels")
    return auc_rank(cdis.signal.flat(), labels)


@dataclass(frozen=True)
class ClassificationReport:
    """Confusion counts and derived rates; a rate is None if its denominator is 0."""

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None


def classify_report(predictions, labels, positive_class: int = 1) -> ClassificationReport:
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ContractViolation(
            f"{predictions.size} predictions vs {labels.size} labels (need equal, nonempty)",
            tag="classify.length")
    if positive_class not in (0, 1):
        raise ContractViolation(f"positive_class must be 0 or 1, got {positive_class}",
                                tag="classify.positive-class")
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if not np.isin(arr, (0, 1)).all():
            raise ContractViolation(f"{name} must be 0 or 1", tag="classify.values")

    pos = positive_class
    tp = int(((predictions == pos) & (labels == pos)).sum())
    fp = int(((predictions == pos) & (labels != pos)).sum())
    tn = int(((predictions != pos) & (labels != pos)).sum())
    fn = int(((predictions != pos) & (labels == pos)).sum())

    def rate(num, den):
        return num / den if den > 0 else None

    return ClassificationReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=rate(tp + tn, tp + tn + fp + fn),
        sensitivity=rate(tp, tp + fn),
        specificity=rate(tn, tn + fp),
    )
