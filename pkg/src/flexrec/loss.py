"""Dirichlet parameters and the three-term evidential training objective.

Scalar, per-sample reference implementation.  Training goes through the
batch kernels in :mod:`flexrec.kernels`; :func:`loss_gradient` is a thin
wrapper over them so the finite-difference tests check the same gradient
code the optimiser uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels, sl_core
from ._special import digamma
from .kernels import DEGENERATE_EPS, DegenerateOpinionError

__all__ = [
    "DegenerateOpinionError",
    "DirichletParams",
    "LossBreakdown",
    "LossWeights",
    "dirichlet_params",
    "edl_loss",
    "reg_loss",
    "mask_alpha",
    "kl_uniform_dirichlet",
    "kl_weight",
    "total_loss",
    "loss_gradient",
]


@dataclass(frozen=True)
class DirichletParams:
    alpha: tuple

    def __post_init__(self):
        for a in self.alpha:
            if not math.isfinite(a) or a < 1.0:
                raise ValueError(f"Dirichlet concentration {a!r} must be finite and >= 1")

    @property
    def strength(self) -> float:
        return math.fsum(self.alpha)

    def __len__(self):
        return len(self.alpha)


@dataclass(frozen=True)
class LossWeights:
    lambda_reg: float = 1.0
    lambda_kl_max: float = 0.05
    kl_warmup_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.kl_warmup_fraction <= 1.0:
            raise ValueError("kl_warmup_fraction must lie in (0, 1]")
        if self.lambda_reg < 0 or self.lambda_kl_max < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    edl: float
    reg: float
    kl: float
    total: float
    lambda_kl_effective: float
    lambda_reg: float


def _label_index(label, k: int) -> int:
    if isinstance(label, (int, np.integer)):
        idx = int(label)
    else:
        y = [float(v) for v in label]
        if len(y) != k or sorted(y) != [0.0] * (k - 1) + [1.0]:
            raise ValueError(f"label {label!r} is not a one-hot vector of length {k}")
        idx = y.index(1.0)
    if not 0 <= idx < k:
        raise ValueError(f"label {idx} out of range for K={k}")
    return idx


def dirichlet_params(beliefs: Sequence[float], uncertainty: float,
                     eps: float = DEGENERATE_EPS) -> DirichletParams:
    """alpha_i = K * b_i / U + 1."""
    if uncertainty <= eps:
        raise DegenerateOpinionError(f"total uncertainty {uncertainty!r} <= {eps}")
    k = len(beliefs)
    return DirichletParams(tuple(k * b / uncertainty + 1.0 for b in beliefs))


def edl_loss(params: DirichletParams, label) -> float:
    t = _label_index(label, len(params))
    return math.log(params.strength) - math.log(params.alpha[t])


def reg_loss(pl: Sequence[float], label, ignorance_estimate: float) -> float:
    """Squared gap between the true-class plausibility and 1 - I (I held fixed)."""
    t = _label_index(label, len(pl))
    return (pl[t] - (1.0 - ignorance_estimate)) ** 2


def mask_alpha(params: DirichletParams, label) -> DirichletParams:
    t = _label_index(label, len(params))
    return DirichletParams(tuple(1.0 if i == t else a for i, a in enumerate(params.alpha)))


def kl_uniform_dirichlet(params: DirichletParams) -> float:
    """KL(Dir(alpha) || Dir(1, ..., 1))."""
    alpha = params.alpha
    s = params.strength
    k = len(alpha)
    dig_s = digamma(s)
    val = (
        math.lgamma(s)
        - math.lgamma(k)
        - math.fsum(math.lgamma(a) for a in alpha)
        + math.fsum((a - 1.0) * (digamma(a) - dig_s) for a in alpha)
    )
    return max(val, 0.0)


def kl_weight(weights: LossWeights, epoch_fraction: float) -> float:
    """Linear ramp of the KL coefficient from 0 to its maximum over the warmup."""
    if not 0.0 <= epoch_fraction <= 1.0:
        raise ValueError(f"epoch_fraction {epoch_fraction!r} outside [0, 1]")
    return weights.lambda_kl_max * min(1.0, epoch_fraction / weights.kl_warmup_fraction)


def total_loss(pl: Sequence[float], label, weights: LossWeights = LossWeights(),
               epoch_fraction: float = 1.0, ignorance_estimate: float | None = None) -> LossBreakdown:
    """Evaluate all three loss terms for one sample.

    ``ignorance_estimate`` overrides the ignorance used by the regulariser;
    by default it is the ignorance of ``pl`` itself.
    """
    op = sl_core.hyper_opinion(pl)
    t = _label_index(label, op.num_classes)
    alpha = dirichlet_params(op.beliefs, op.uncertainty)
    i_hat = op.ignorance if ignorance_estimate is None else ignorance_estimate
    edl = edl_loss(alpha, t)
    reg = reg_loss(op.source, t, i_hat)
    kl = kl_uniform_dirichlet(mask_alpha(alpha, t))
    lam_kl = kl_weight(weights, epoch_fraction)
    return LossBreakdown(
        edl=edl,
        reg=reg,
        kl=kl,
        total=edl + weights.lambda_reg * reg + lam_kl * kl,
        lambda_kl_effective=lam_kl,
        lambda_reg=weights.lambda_reg,
    )


def loss_gradient(pl: Sequence[float], label, weights: LossWeights = LossWeights(),
                  epoch_fraction: float = 1.0) -> list:
    """d(total loss)/d(pl_i), treating the regulariser's ignorance as a constant."""
    pl = sl_core.as_plausibility(pl)
    t = _label_index(label, len(pl))
    _, _, _, grad = kernels.loss_grad_batch(
        np.asarray([pl]), np.asarray([t]), weights.lambda_reg, kl_weight(weights, epoch_fraction)
    )
    return grad[0].tolist()
