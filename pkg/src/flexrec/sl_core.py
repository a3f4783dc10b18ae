"""Subjective-logic algebra over the frame of discernment induced by K
plausibility functions.

Each plausibility function ``f_j`` puts mass ``pl_j`` on the whole frame and
``1 - pl_j`` on the frame minus class ``j``.  Combining the K functions
without normalisation gives every subset ``A`` the mass::

    m(A) = prod_{i in A} pl_i * prod_{j not in A} (1 - pl_j)

so any single mass costs O(K); only :func:`enumerate_masses` touches all 2^K.

Products are taken over the factors in sorted order and sums use
:func:`math.fsum`, which makes every quantity here invariant (bit for bit)
under a relabelling of the classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

MAX_ENUMERATION_K = 20
CONFUSION_CLAMP_TOL = 1e-12

ClassSubset = Union[frozenset, set, tuple, list, int]


class InvalidPlausibilityError(ValueError):
    pass


class InvalidSubsetError(ValueError):
    pass


class InvalidPairError(ValueError):
    pass


class EnumerationLimitError(ValueError):
    pass


class InternalConsistencyError(ArithmeticError):
    pass


def as_plausibility(pl) -> tuple:
    """Validate a plausibility vector and return it as a tuple of floats."""
    values = tuple(float(v) for v in pl)
    if len(values) < 2:
        raise InvalidPlausibilityError(f"need at least 2 classes, got {len(values)}")
    for v in values:
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise InvalidPlausibilityError(f"plausibility {v!r} outside [0, 1]")
    return values


def _members(a: ClassSubset, k: int) -> frozenset:
    if isinstance(a, (int, np.integer)) and not isinstance(a, bool):
        # width-K bit pattern
        if a < 0 or a >= (1 << k):
            raise InvalidSubsetError(f"bit pattern {a} does not fit {k} classes")
        return frozenset(i for i in range(k) if a >> i & 1)
    members = frozenset(int(i) for i in a)
    for i in members:
        if i < 0 or i >= k:
            raise InvalidSubsetError(f"class index {i} out of range for K={k}")
    return members


def _check_index(i: int, k: int) -> int:
    i = int(i)
    if i < 0 or i >= k:
        raise InvalidSubsetError(f"class index {i} out of range for K={k}")
    return i


def canonical_product(factors: Iterable[float]) -> float:
    """Product of the factors taken in ascending order."""
    acc = 1.0
    for f in sorted(factors):
        acc *= f
    return acc


def subset_mass(pl: Sequence[float], a: ClassSubset) -> float:
    """Combined mass on the subset ``a`` (a set of class indices or a bit pattern).

    The empty subset carries the ignorance.
    """
    pl = as_plausibility(pl)
    members = _members(a, len(pl))
    return canonical_product(p if i in members else 1.0 - p for i, p in enumerate(pl))


def singleton_beliefs(pl: Sequence[float]) -> list:
    pl = as_plausibility(pl)
    return [canonical_product([p] + [1.0 - q for j, q in enumerate(pl) if j != i]) for i, p in enumerate(pl)]


def ignorance(pl: Sequence[float]) -> float:
    """Mass left on the empty set: prod_j (1 - pl_j)."""
    pl = as_plausibility(pl)
    return canonical_product(1.0 - p for p in pl)


def total_uncertainty(pl: Sequence[float]) -> float:
    return 1.0 - math.fsum(singleton_beliefs(pl))


def _confusion_from(u: float, ign: float) -> float:
    c = u - ign
    if c < 0.0:
        if c < -CONFUSION_CLAMP_TOL:
            raise InternalConsistencyError(f"negative confusion {c!r}")
        c = 0.0
    return c


def total_confusion(pl: Sequence[float]) -> float:
    """Mass on all subsets with two or more classes (U - I)."""
    return _confusion_from(total_uncertainty(pl), ignorance(pl))


def class_related_confusion(pl: Sequence[float], i: int) -> float:
    """Confusion mass on the non-singleton supersets of ``{i}``; pl_i - b_i."""
    pl = as_plausibility(pl)
    i = _check_index(i, len(pl))
    b_i = canonical_product([pl[i]] + [1.0 - q for j, q in enumerate(pl) if j != i])
    return max(pl[i] - b_i, 0.0)


def pairwise_confusion(pl: Sequence[float], i: int, j: int) -> float:
    """Mass on exactly the pair ``{i, j}``; symmetric in its arguments."""
    pl = as_plausibility(pl)
    k = len(pl)
    i, j = _check_index(i, k), _check_index(j, k)
    if i == j:
        raise InvalidPairError(f"pairwise confusion needs two distinct classes, got ({i}, {j})")
    return canonical_product(p if c in (i, j) else 1.0 - p for c, p in enumerate(pl))


@lru_cache(maxsize=None)
def _subset_keys(k: int) -> tuple:
    return tuple(frozenset(i for i in range(k) if mask >> i & 1) for mask in range(1 << k))


def mass_table(pl: Sequence[float]) -> np.ndarray:
    """All 2^K masses as an array indexed by bit pattern (bit i set = class i in A)."""
    pl = as_plausibility(pl)
    k = len(pl)
    if k > MAX_ENUMERATION_K:
        raise EnumerationLimitError(f"refusing to enumerate 2^{k} subsets (limit K={MAX_ENUMERATION_K})")
    p = np.asarray(pl)
    bits = (np.arange(1 << k)[:, None] >> np.arange(k)) & 1
    factors = np.where(bits == 1, p, 1.0 - p)
    factors.sort(axis=1)
    acc = np.ones(1 << k)
    # column by column so each entry sees the same multiplication sequence as canonical_product
    for col in range(k):
        acc = acc * factors[:, col]
    return acc


def enumerate_masses(pl: Sequence[float]) -> dict:
    """Map every subset (as a frozenset) to its combined mass."""
    table = mass_table(pl)
    return dict(zip(_subset_keys(len(table).bit_length() - 1), table.tolist()))


@dataclass(frozen=True)
class HyperOpinion:
    beliefs: tuple
    ignorance: float
    uncertainty: float
    total_confusion: float
    source: tuple

    @property
    def num_classes(self) -> int:
        return len(self.source)

    def class_confusion(self, i: int) -> float:
        return class_related_confusion(self.source, i)

    def pairwise(self, i: int, j: int) -> float:
        return pairwise_confusion(self.source, i, j)

    def mass(self, a: ClassSubset) -> float:
        return subset_mass(self.source, a)


def hyper_opinion(pl: Sequence[float]) -> HyperOpinion:
    pl = as_plausibility(pl)
    beliefs = singleton_beliefs(pl)
    ign = ignorance(pl)
    u = 1.0 - math.fsum(beliefs)
    return HyperOpinion(
        beliefs=tuple(beliefs),
        ignorance=ign,
        uncertainty=u,
        total_confusion=_confusion_from(u, ign),
        source=pl,
    )
