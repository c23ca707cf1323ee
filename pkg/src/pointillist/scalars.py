"""Arithmetic helpers generic over plain numbers, numpy arrays and dual numbers.

Evaluators in this library are written once and run with three weight kinds:
complex scalars, numpy arrays (for vectorized contour/stencil grids), and
nilpotent dual numbers (for exact mixed derivatives).  Anything with an
``exp`` method is dispatched to it; everything else goes through numpy.
"""

from __future__ import annotations

import numpy as np


def sexp(v):
    """Exponential that works for scalars, numpy arrays and dual numbers."""
    if hasattr(v, "exp"):
        return v.exp()
    return np.exp(v)


def spow(v, k: int):
    """Small non-negative integer power via repeated multiplication."""
    if k < 0:
        raise ValueError("negative powers are not supported")
    out = 1.0
    for _ in range(k):
        out = out * v
    return out
