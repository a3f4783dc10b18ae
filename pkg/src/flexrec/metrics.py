"""Ranking and set-prediction metrics.

AUROC is the Mann-Whitney statistic with half credit for ties.  AUPR is
step-wise average precision over distinct score thresholds (no trapezoids).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import decision
from .sl_core import HyperOpinion


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredBinary:
    scores: np.ndarray
    positives: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        p = np.asarray(self.positives, dtype=bool).reshape(-1)
        if s.shape != p.shape:
            raise ValueError("scores and positives must have equal length")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "positives", p)


def _tie_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied scores sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.r_[0, boundaries]
    ends = np.r_[boundaries, len(scores)]
    ranks = np.empty(len(scores))
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auroc(data: ScoredBinary) -> float:
    """P(score of a random positive > score of a random negative), ties count 1/2."""
    pos = data.positives
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    ranks = _tie_ranks(data.scores)
    # rank sums are integers or halves, so this numerator is exact
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(data: ScoredBinary) -> float:
    """Sum over distinct thresholds of (recall step) x (precision at that threshold)."""
    pos = data.positives
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-data.scores, kind="mergesort")
    s = data.scores[order]
    hit = pos[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(hit)[last]
    seen = last + 1
    recall_steps = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_steps * (tp / seen)))


def aupr(data: ScoredBinary, positives_are: str = "open") -> float:
    """Area under the precision-recall curve with open or closed samples as positives.

    ``data.positives`` flags open-set samples and ``data.scores`` grow with
    open-ness (e.g. ignorance).  With ``positives_are="closed"`` the roles are
    swapped by flipping both the labels and the score direction.
    """
    if positives_are == "open":
        return average_precision(data)
    if positives_are == "closed":
        return average_precision(ScoredBinary(-data.scores, ~data.positives))
    raise ValueError("positives_are must be 'open' or 'closed'")


def weighted_confusion_auroc(opinions: Sequence[HyperOpinion], predictions, truths) -> float:
    """Does confusion with the predicted class point at the true class?

    Only misclassified samples are used.  For every true class c, the column
    of confusion scores for class c is ranked across samples against the
    indicator ``truth == c``; the per-class AUROCs are averaged with weights
    equal to each class's share of the misclassified samples.  Classes whose
    column has no positives or no negatives are skipped and the weights
    renormalised.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    wrong = np.flatnonzero(predictions != truths)
    if wrong.size == 0:
        raise UndefinedMetricError("no misclassified samples")
    scores = np.array([decision.confusion_scores(opinions[i], int(predictions[i])) for i in wrong])
    t = truths[wrong]
    total_w = 0.0
    acc = 0.0
    for c in range(scores.shape[1]):
        positives = t == c
        if not positives.any() or positives.all():
            continue
        w = positives.mean()
        acc += w * auroc(ScoredBinary(scores[:, c], positives))
        total_w += w
    if total_w == 0.0:
        raise UndefinedMetricError("no class has both positives and negatives among misclassified samples")
    return float(acc / total_w)


def per_class_f1(predictions, truths, num_labels: int) -> np.ndarray:
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    f1 = np.zeros(num_labels)
    for c in range(num_labels):
        tp = np.sum((predictions == c) & (truths == c))
        fp = np.sum((predictions == c) & (truths != c))
        fn = np.sum((predictions != c) & (truths == c))
        denom = 2 * tp + fp + fn
        f1[c] = 2 * tp / denom if denom else 0.0
    return f1


def _to_open_label(values, k: int) -> np.ndarray:
    out = np.array([k if v is None else int(v) for v in values], dtype=np.int64)
    out[out < 0] = k
    if np.any(out > k):
        raise ValueError(f"labels must lie in 0..{k} (or be -1/None for reject/open)")
    return out


def macro_f1_open(predictions, truths, k: int) -> float:
    """Unweighted mean F1 over the K known classes plus one reject/open class.

    Reject and open-set entries may be given as ``k``, ``-1`` or ``None``.
    Classes absent from both predictions and truths contribute 0.
    """
    p = _to_open_label(predictions, k)
    t = _to_open_label(truths, k)
    if p.shape != t.shape:
        raise ValueError("predictions and truths must align")
    return float(per_class_f1(p, t, k + 1).mean())


def tpr95_threshold(closed_scores, rate: float = 0.95) -> float:
    """Smallest observed score t with at least ``rate`` of the closed samples <= t.

    Samples with score <= t are accepted as closed-set.
    """
    s = np.sort(np.asarray(closed_scores, dtype=np.float64).reshape(-1))
    if len(s) < 20:
        raise ValueError(f"need at least 20 closed-set scores, got {len(s)}")
    return float(s[math.ceil(rate * len(s)) - 1])
