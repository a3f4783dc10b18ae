"""Digamma and trigamma for arguments >= 1.

Both shift the argument up by a fixed six steps with the recurrence and
then apply the asymptotic series, which keeps every evaluation branch-free so
the scalar and the array versions perform the same floating-point operations.
"""

import numpy as np

_SHIFT = 6


def _digamma_tail(x):
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))))
    return np.log(x) - 0.5 * inv - series


def _trigamma_tail(x):
    inv = 1.0 / x
    inv2 = inv * inv
    series = 1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66)))
    return inv + 0.5 * inv2 + inv * inv2 * series


def digamma(x):
    """Digamma function, elementwise; accurate to ~1e-12 for x >= 1."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for k in range(_SHIFT):
        acc = acc + 1.0 / (x + k)
    out = _digamma_tail(x + _SHIFT) - acc
    return out if out.ndim else float(out)


def trigamma(x):
    """Derivative of the digamma function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for k in range(_SHIFT):
        xk = x + k
        acc = acc + 1.0 / (xk * xk)
    out = _trigamma_tail(x + _SHIFT) + acc
    return out if out.ndim else float(out)
