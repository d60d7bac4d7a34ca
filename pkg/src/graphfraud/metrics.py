"""Exact ranking and classification metrics for imbalanced binary labels.

Degenerate inputs (a single class, or no positives) yield ``None`` rather
than an exception so that multi-run aggregation can skip undefined values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, ValidationError


@dataclass(frozen=True)
class ScoredLabels:
    """Fraud-class scores paired with ground-truth labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        if scores.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"ScoredLabels: {scores.shape[0]} scores vs {labels.shape[0]} labels"
            )
        if scores.shape[0] == 0:
            raise ValidationError("ScoredLabels: need at least one element")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("ScoredLabels: scores must be finite")
        if np.any((labels != 0) & (labels != 1)):
            raise ValidationError("ScoredLabels: labels must be 0 or 1")


def aucroc(scored: ScoredLabels) -> Optional[float]:
    """Probability that a random positive outranks a random negative.

    Ties contribute 1/2. Computed from tie-averaged ranks in O(n log n);
    returns None when only one class is present.
    """
    labels = scored.labels
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scored.scores, kind="mergesort")
    s = scored.scores[order]
    ranks = np.empty(s.shape[0], dtype=np.float64)
    i = 0
    n = s.shape[0]
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        # ranks are 1-based; tied scores share the average rank of the group
        ranks[i : j + 1] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[labels[order] == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def aucprc(scored: ScoredLabels) -> Optional[float]:
    """Average precision with tied scores grouped into a single threshold step.

    AP = sum_k (R_k - R_{k-1}) * P_k over descending score groups; returns
    None when there are no positives.
    """
    labels = scored.labels
    n_pos = int(labels.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scored.scores, kind="mergesort")
    s = scored.scores[order]
    y = labels[order]
    ap = 0.0
    tp = 0
    seen = 0
    i = 0
    n = s.shape[0]
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        group_pos = int(y[i : j + 1].sum())
        tp_prev = tp
        tp += group_pos
        seen = j + 1
        precision = tp / seen
        recall_step = (tp - tp_prev) / n_pos
        ap += recall_step * precision
        i = j + 1
    return ap


def f1_macro(predictions, labels) -> float:
    """Unweighted mean of the per-class F1 scores, with the 0/0 -> 0 convention."""
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred.shape[0] != y.shape[0]:
        raise DimensionError(f"f1_macro: {pred.shape[0]} predictions vs {y.shape[0]} labels")
    if pred.shape[0] == 0:
        raise ValidationError("f1_macro: empty input")
    total = 0.0
    for cls in (0, 1):
        tp = int(np.sum((pred == cls) & (y == cls)))
        fp = int(np.sum((pred == cls) & (y != cls)))
        fn = int(np.sum((pred != cls) & (y == cls)))
        denom = 2 * tp + fp + fn
        total += (2 * tp / denom) if denom > 0 else 0.0
    return total / 2.0


@dataclass
class EvalReport:
    """AUCROC / AUCPRC / F1-Macro plus per-class support counts."""

    aucroc: Optional[float]
    aucprc: Optional[float]
    f1_macro: Optional[float]
    support: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "aucroc": self.aucroc,
            "aucprc": self.aucprc,
            "f1_macro": self.f1_macro,
            "support": {str(k): int(v) for k, v in self.support.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_scores(cls, scores, labels, predictions) -> "EvalReport":
        scored = ScoredLabels(scores=np.asarray(scores), labels=np.asarray(labels))
        y = scored.labels
        return cls(
            aucroc=aucroc(scored),
            aucprc=aucprc(scored),
            f1_macro=f1_macro(predictions, y),
            support={0: int(np.sum(y == 0)), 1: int(np.sum(y == 1))},
        )
