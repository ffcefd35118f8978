"""Scalar minimisation helpers."""
from __future__ import annotations

import math

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Minimiser of a unimodal ``f`` on ``[lo, hi]`` to within ``tol``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def minimize_nonnegative(f, x0: float, tol: float = 1e-8) -> float:
    """Minimise ``f`` over ``x >= 0`` starting from the scale of ``x0``.

    The upper end of the search interval is doubled from ``2 x0`` until ``f``
    rises; golden-section search then runs on ``[0, hi]`` with a tolerance
    relative to ``max(1, hi)``. The boundary ``x = 0`` wins ties.
    """
    hi = 2.0 * x0 if x0 > 0 and math.isfinite(x0) else 1.0
    f_hi = f(hi)
    for _ in range(200):
        f_half = f(0.5 * hi)
        if f_hi > f_half:
            break
        hi *= 2.0
        f_hi = f(hi)
    x = golden_section(f, 0.0, hi, tol=tol * max(1.0, hi))
    if f(0.0) <= f(x):
        return 0.0
    return x
