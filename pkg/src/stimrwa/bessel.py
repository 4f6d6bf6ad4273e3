"""Integer-order Bessel functions of the first kind, thin wrappers over scipy."""

from __future__ import annotations

import numpy as np
from scipy.special import jv


def jn_table(mmax: int, z: float) -> np.ndarray:
    """Return ``[J_0(z), J_1(z), ..., J_mmax(z)]`` for real ``z``."""
    if mmax < 0:
        raise ValueError("mmax must be non-negative")
    return jv(np.arange(mmax + 1), float(z))


def jn(m: int, z: float) -> float:
    """``J_m(z)`` for integer ``m`` (negative allowed) and real ``z``."""
    return float(jv(int(m), float(z)))


def jn_range(mmin: int, mmax: int, z: float) -> np.ndarray:
    """``J_m(z)`` for ``m = mmin .. mmax`` inclusive."""
    ms = np.arange(mmin, mmax + 1)
    vals = jv(np.abs(ms), float(z))
    # J_{-m} = (-1)^m J_m, applied exactly rather than through jv's reflection
    vals[(ms < 0) & (ms % 2 == 1)] *= -1.0
    return vals
