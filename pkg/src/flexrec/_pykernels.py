"""Pure numpy implementation of the batch kernels.

Mirrors ``_ckernels.pyx`` function for function.  Inputs are assumed to be
validated by :mod:`flexrec.kernels`; nothing here raises on degenerate
opinions, the caller inspects the returned uncertainty instead.
"""

import math

import numpy as np

from ._special import digamma, trigamma

_lgamma = np.frompyfunc(math.lgamma, 1, 1)


def _lgamma_array(x):
    return _lgamma(x).astype(np.float64)


def _leave_one_out_products(q):
    n, k = q.shape
    prefix = np.ones((n, k))
    suffix = np.ones((n, k))
    for i in range(1, k):
        prefix[:, i] = prefix[:, i - 1] * q[:, i - 1]
    for i in range(k - 2, -1, -1):
        suffix[:, i] = suffix[:, i + 1] * q[:, i + 1]
    return prefix * suffix


def opinion_batch(pl):
    """Singleton beliefs (N, K), ignorance (N,) and total uncertainty (N,)."""
    q = 1.0 - pl
    beliefs = pl * _leave_one_out_products(q)
    ign = np.prod(q, axis=1)
    unc = 1.0 - beliefs.sum(axis=1)
    return beliefs, ign, unc


def loss_grad_batch(pl, labels, lambda_reg, lambda_kl):
    """Per-sample loss terms and d(total)/d(pl).

    Returns ``(edl, reg, kl, grad, uncertainty)``; ``grad`` is (N, K) and is
    the gradient of ``edl + lambda_reg * reg + lambda_kl * kl`` for each
    sample separately (no batch averaging).
    """
    n, k = pl.shape
    rows = np.arange(n)
    q = 1.0 - pl
    excl1 = _leave_one_out_products(q)
    beliefs = pl * excl1
    ign = np.prod(q, axis=1)
    unc = 1.0 - beliefs.sum(axis=1)

    with np.errstate(all="ignore"):
        alpha = k * beliefs / unc[:, None] + 1.0
        strength = alpha.sum(axis=1)
        a_true = alpha[rows, labels]
        edl = np.log(strength) - np.log(a_true)

        pl_true = pl[rows, labels]
        resid = pl_true - (1.0 - ign)
        reg = resid * resid

        alpha_t = alpha.copy()
        alpha_t[rows, labels] = 1.0
        s_t = alpha_t.sum(axis=1)
        dig_s = digamma(s_t)
        kl = (
            _lgamma_array(s_t)
            - math.lgamma(k)
            - _lgamma_array(alpha_t).sum(axis=1)
            + ((alpha_t - 1.0) * (digamma(alpha_t) - dig_s[:, None])).sum(axis=1)
        )
        kl = np.maximum(kl, 0.0)

        # d b_i / d pl_k
        db = np.zeros((n, k, k))
        for i in range(k):
            db[:, i, i] = excl1[:, i]
            for c in range(k):
                if c == i:
                    continue
                others = [j for j in range(k) if j != i and j != c]
                prod = np.prod(q[:, others], axis=1) if others else np.ones(n)
                db[:, i, c] = -pl[:, i] * prod
        du = -db.sum(axis=1)
        u2 = (unc * unc)[:, None, None]
        dalpha = k * (db * unc[:, None, None] - beliefs[:, :, None] * du[:, None, :]) / u2

        g_edl = dalpha.sum(axis=1) / strength[:, None] - dalpha[rows, labels, :] / a_true[:, None]

        coef = (alpha_t - 1.0) * trigamma(alpha_t) - (trigamma(s_t) * (s_t - k))[:, None]
        coef[rows, labels] = 0.0
        g_kl = np.einsum("ni,nik->nk", coef, dalpha)

        g_reg = np.zeros((n, k))
        g_reg[rows, labels] = 2.0 * resid

        grad = g_edl + lambda_reg * g_reg + lambda_kl * g_kl
    return edl, reg, kl, grad, unc
