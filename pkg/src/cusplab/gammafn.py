"""Complex gamma function via the Lanczos approximation.

g = 7 with the classic nine-coefficient table; the reflection formula
covers Re z < 1/2.  Relative accuracy is ~1e-13 on the strips this
laboratory evaluates, which the identity-based tests pin down.
"""

from __future__ import annotations

import numpy as np

_G = 7.0
_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])


def gamma(z):
    """Gamma(z) for complex or real scalar/array input."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)

    reflect = z.real < 0.5
    zz = np.where(reflect, 1.0 - z, z)

    w = zz - 1.0
    x = np.full_like(w, _COEF[0])
    for i in range(1, len(_COEF)):
        x = x + _COEF[i] / (w + i)
    t = w + _G + 0.5
    val = np.sqrt(2.0 * np.pi) * t ** (w + 0.5) * np.exp(-t) * x

    out[~reflect] = val[~reflect]
    if np.any(reflect):
        zr = z[reflect]
        out[reflect] = np.pi / (np.sin(np.pi * zr) * val[reflect])
    return out[0] if scalar else out
