"""Backend selection for the batch evidential kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` takes over.  Set
``FLEXREC_BACKEND=python`` to force the fallback (the benchmark and the
cross-backend tests do this).
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

DEGENERATE_EPS = 1e-8


class DegenerateOpinionError(ArithmeticError):
    """Total uncertainty collapsed to (near) zero, so Dirichlet parameters blow up."""


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = None if os.environ.get("FLEXREC_BACKEND", "").lower() == "python" else _load_compiled()

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for the active one)."""
    if name is None:
        return _compiled if _compiled is not None else _pykernels
    if name == "python":
        return _pykernels
    if name == "cython":
        mod = _compiled or _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .` with Cython available")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def _as_pl(pl) -> np.ndarray:
    arr = np.ascontiguousarray(pl, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"expected an (N, K>=2) plausibility matrix, got shape {arr.shape}")
    return arr


def opinion_batch(pl, backend: str | None = None):
    """Beliefs (N, K), ignorance (N,), uncertainty (N,) for a batch of plausibilities."""
    return get_backend(backend).opinion_batch(_as_pl(pl))


def loss_grad_batch(pl, labels, lambda_reg: float, lambda_kl: float,
                    eps: float = DEGENERATE_EPS, backend: str | None = None):
    """Per-sample (edl, reg, kl) terms and per-sample gradient w.r.t. pl.

    Raises DegenerateOpinionError if any sample has total uncertainty <= eps.
    """
    pl = _as_pl(pl)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape != (pl.shape[0],):
        raise ValueError("labels must be one integer per row of pl")
    if labels.size and (labels.min() < 0 or labels.max() >= pl.shape[1]):
        raise ValueError("label out of range")
    edl, reg, kl, grad, unc = get_backend(backend).loss_grad_batch(pl, labels, float(lambda_reg), float(lambda_kl))
    bad = np.flatnonzero(~(unc > eps))
    if bad.size:
        raise DegenerateOpinionError(
            f"total uncertainty {float(unc[bad[0]])!r} <= {eps} for sample {int(bad[0])}"
        )
    return edl, reg, kl, grad
