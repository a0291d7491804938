"""Exact OOD detection metrics: AUROC, FPR at fixed TPR, ID accuracy.

Conventions (documented for cross-tool comparability):

* scores are oriented larger = more ID-like;
* AUROC is the rank statistic P(id > ood) + 0.5 P(id == ood), ties counted
  one half each;
* the FPR threshold is the ceil(target * n_id)-th largest ID score, flagging
  with the inclusive comparison score >= threshold; no interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SimilarityRow
from .errors import EmptyInput, LabelOutOfRange


@dataclass(frozen=True)
class MetricResult:
    """AUROC, FPR at 95% TPR, the realizing threshold, and sample counts."""

    auroc: float
    fpr95: float
    threshold: float
    n_id: int
    n_ood: int


def _validate_scores(scores: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    boundaries = np.concatenate(
        ([0], np.flatnonzero(np.diff(sorted_vals)) + 1, [values.size])
    )
    ranks = np.empty(values.size, dtype=np.float64)
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
    return ranks


def auroc(id_scores, ood_scores) -> float:
    """Probability an ID sample outranks an OOD sample (ties count half)."""
    ids = _validate_scores(id_scores, "id_scores")
    oods = _validate_scores(ood_scores, "ood_scores")
    ranks = _average_ranks(np.concatenate([ids, oods]))
    id_rank_sum = ranks[: ids.size].sum()
    u = id_rank_sum - ids.size * (ids.size + 1) / 2.0
    return float(u / (ids.size * oods.size))


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> tuple[float, float]:
    """FPR when the ID true positive rate is held at >= tpr_target.

    The threshold is the ceil(tpr_target * n_id)-th largest ID score; an OOD
    sample counts as a false positive when its score >= threshold.
    """
    ids = _validate_scores(id_scores, "id_scores")
    oods = _validate_scores(ood_scores, "ood_scores")
    if not (0 < tpr_target <= 1):
        raise ValueError("tpr_target must be in (0, 1]")
    k = math.ceil(tpr_target * ids.size)
    threshold = float(np.sort(ids)[::-1][k - 1])
    fpr = float(np.mean(oods >= threshold))
    return fpr, threshold


def evaluate_ood(id_scores, ood_scores, tpr_target: float = 0.95) -> MetricResult:
    """Bundle AUROC and FPR at the target TPR into one record."""
    ids = _validate_scores(id_scores, "id_scores")
    oods = _validate_scores(ood_scores, "ood_scores")
    fpr, threshold = fpr_at_tpr(ids, oods, tpr_target)
    return MetricResult(
        auroc=auroc(ids, oods),
        fpr95=fpr,
        threshold=threshold,
        n_id=int(ids.size),
        n_ood=int(oods.size),
    )


def accuracy(sims: list[SimilarityRow], labels) -> float:
    """Fraction of rows whose top-1 class index equals the label."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if len(sims) == 0:
        raise EmptyInput("no similarity rows")
    if labels.shape[0] != len(sims):
        raise LabelOutOfRange(f"{labels.shape[0]} labels for {len(sims)} rows")
    hits = 0
    for sim, label in zip(sims, labels):
        if not (0 <= label < sim.num_classes):
            raise LabelOutOfRange(f"label {label} outside [0, {sim.num_classes})")
        if sim.top_index == label:
            hits += 1
    return hits / len(sims)
