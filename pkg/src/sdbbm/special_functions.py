"""Dawson's integral and the bounded kernel Q(x) = sqrt(x) e^{-x} int_0^x e^y y^{-1/2} dy.

The substitution y = t**2 turns the weakly singular integral defining Q into
Dawson's integral, ``Q(x) = 2 sqrt(x) D(sqrt(x))``, which is evaluated with
:func:`scipy.special.dawsn` (Cephes rational approximations, relative error
near machine epsilon).
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = ["dawson_core", "q_function", "Q_UPPER_BOUND"]

#: Global bound on Q over [0, inf); the maximum is about 1.2838 near x = 2.26.
Q_UPPER_BOUND = 1.3


def _check_argument(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {x!r}")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative, got {x!r}")
    return arr


def dawson_core(z):
    """Dawson's integral ``D(z) = exp(-z**2) * int_0^z exp(t**2) dt`` for z >= 0.

    Accepts scalars or arrays; scalars come back as Python floats.
    """
    arr = _check_argument(z, "z")
    out = special.dawsn(arr)
    return float(out) if out.ndim == 0 else out


def q_function(x):
    """Evaluate Q(x) for x >= 0 (scalar or array).

    Q(0) = 0, Q increases to a maximum of about 1.284 and decays to 1 from above.
    """
    arr = _check_argument(x, "x")
    root = np.sqrt(arr)
    out = 2.0 * root * special.dawsn(root)
    return float(out) if out.ndim == 0 else out

