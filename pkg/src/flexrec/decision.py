"""Flexible prediction: reject, predict one class, or grow a combined set.

The set grows greedily from the highest-belief class, adding classes in
order of their pairwise confusion with it, until the belief of the set
(the total mass on its non-empty subsets) reaches the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import sl_core
from .sl_core import HyperOpinion


class Mode(str, Enum):
    REJECTED = "rejected"
    SINGLE = "single"
    COMBINED = "combined"


@dataclass(frozen=True)
class PredictiveSet:
    classes: tuple
    mode: Mode
    mass: float = 0.0

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("predictive set classes must be distinct")
        expected = (Mode.REJECTED if not self.classes
                    else Mode.SINGLE if len(self.classes) == 1 else Mode.COMBINED)
        if self.mode is not expected:
            raise ValueError(f"mode {self.mode.value} inconsistent with {len(self.classes)} classes")

    def __contains__(self, c) -> bool:
        return c in self.classes

    def __len__(self):
        return len(self.classes)


def set_belief(pl: Sequence[float], members) -> float:
    """Total mass on the non-empty subsets of ``members``.

    Summing the combined masses over all subsets of S (empty set included)
    telescopes to prod_{j not in S} (1 - pl_j); dropping the empty set leaves
    that product minus the ignorance.
    """
    members = set(members)
    outside = [1.0 - p for j, p in enumerate(pl) if j not in members]
    return max(sl_core.canonical_product(outside) - sl_core.ignorance(pl), 0.0)


def _argmax(values) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def confusion_scores(opinion: HyperOpinion, predicted: int) -> list:
    """Pairwise confusion of every class with ``predicted``; 0 for ``predicted`` itself."""
    k = opinion.num_classes
    if not 0 <= predicted < k:
        raise sl_core.InvalidSubsetError(f"predicted class {predicted} out of range for K={k}")
    return [0.0 if c == predicted else sl_core.pairwise_confusion(opinion.source, c, predicted)
            for c in range(k)]


def growth_order(opinion: HyperOpinion) -> list:
    """Argmax-belief class first, then the rest by decreasing confusion with it."""
    top = _argmax(opinion.beliefs)
    scores = confusion_scores(opinion, top)
    rest = sorted((c for c in range(opinion.num_classes) if c != top), key=lambda c: (-scores[c], c))
    return [top] + rest


def predict_flexible(opinion: HyperOpinion, belief_threshold: float) -> PredictiveSet:
    """Smallest greedy prefix whose set belief reaches the threshold, or rejection.

    A threshold of 0 always accepts the top class.
    """
    if not 0.0 <= belief_threshold <= 1.0:
        raise ValueError(f"belief threshold {belief_threshold!r} outside [0, 1]")
    order = growth_order(opinion)
    pl = opinion.source
    chosen = []
    for c in order:
        chosen.append(c)
        mass = opinion.beliefs[c] if len(chosen) == 1 else set_belief(pl, chosen)
        if mass >= belief_threshold:
            mode = Mode.SINGLE if len(chosen) == 1 else Mode.COMBINED
            return PredictiveSet(tuple(chosen), mode, mass)
    return PredictiveSet((), Mode.REJECTED, 0.0)


@dataclass(frozen=True)
class SweepPoint:
    cutoff: int
    avg_predictions: float
    precision: float
    recall: float
    precision_defined: bool


def ranking_sweep(opinions: Sequence[HyperOpinion], predictions: Sequence[int],
                  truths: Sequence[int]) -> list:
    """Precision/recall of confusion-ranked extra predictions versus their average count.

    All (sample, class) pairs are ranked once by confusion with the sample's
    predicted class (descending; ties by sample then class index).  Cutoff N
    gives each sample the classes among the top N pairs.  The predicted class
    scores 0 and therefore only enters at the tail.  At cutoff 0 precision is
    reported as 0 with ``precision_defined`` False.
    """
    m = len(opinions)
    if m == 0:
        return []
    if not len(predictions) == len(truths) == m:
        raise ValueError("opinions, predictions and truths must align")
    pairs = []
    for s, (op, p) in enumerate(zip(opinions, predictions)):
        for c, score in enumerate(confusion_scores(op, int(p))):
            pairs.append((-score, s, c))
    pairs.sort()
    covered = np.zeros(m, dtype=bool)
    hits = nonempty = 0
    curve = [SweepPoint(0, 0.0, 0.0, 0.0, False)]
    for n, (_, s, c) in enumerate(pairs, start=1):
        if not covered[s]:
            covered[s] = True
            nonempty += 1
        if c == truths[s]:
            hits += 1
        curve.append(SweepPoint(n, n / m, hits / nonempty, hits / m, True))
    return curve


def opinions_from_pl(pl_matrix) -> list:
    return [sl_core.hyper_opinion(row) for row in np.asarray(pl_matrix, dtype=np.float64)]


def accumulated_mass_bound(opinion: HyperOpinion) -> float:
    """Largest set belief any prediction can reach: 1 - I."""
    return 1.0 - opinion.ignorance

