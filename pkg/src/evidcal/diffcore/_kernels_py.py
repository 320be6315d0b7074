"""Pure numpy kernels, the fallback twin of the compiled extension.

Each function takes a 1-D contiguous float64 array with all entries already
validated positive and returns a new array. The argument is shifted up with
the standard recurrences (digamma/trigamma to >= 6, log-gamma to >= 8) and
the tail is an 8-term asymptotic series, so absolute error stays below 1e-13
over [1e-3, 1e6].
"""

from __future__ import annotations

import numpy as np

_PSI_COEFFS = (  # B(2n)/(2n), n = 1..8
    1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0,
    1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0, -3617.0 / 8160.0,
)
_TRI_COEFFS = (  # B(2n), n = 1..8
    1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0,
    5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0,
)
_LG_COEFFS = (  # B(2n)/(2n(2n-1)), n = 1..8
    1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0,
    1.0 / 1188.0, -691.0 / 360360.0, 1.0 / 156.0, -3617.0 / 122400.0,
)
_HALF_LOG_TWO_PI = 0.9189385332046727


def _horner(r2: np.ndarray, coeffs) -> np.ndarray:
    poly = np.full_like(r2, coeffs[-1])
    for c in coeffs[-2::-1]:
        poly = c + r2 * poly
    return poly


def digamma(x: np.ndarray) -> np.ndarray:
    y = x.copy()
    acc = np.zeros_like(y)
    mask = y < 6.0
    while mask.any():
        acc[mask] -= 1.0 / y[mask]
        y[mask] += 1.0
        mask = y < 6.0
    r = 1.0 / y
    r2 = r * r
    return acc + np.log(y) - 0.5 * r - r2 * _horner(r2, _PSI_COEFFS)


def trigamma(x: np.ndarray) -> np.ndarray:
    y = x.copy()
    acc = np.zeros_like(y)
    mask = y < 6.0
    while mask.any():
        acc[mask] += 1.0 / (y[mask] * y[mask])
        y[mask] += 1.0
        mask = y < 6.0
    r = 1.0 / y
    r2 = r * r
    return acc + r + 0.5 * r2 + r * r2 * _horner(r2, _TRI_COEFFS)


def lgamma(x: np.ndarray) -> np.ndarray:
    y = x.copy()
    acc = np.zeros_like(y)
    mask = y < 8.0
    while mask.any():
        acc[mask] -= np.log(y[mask])
        y[mask] += 1.0
        mask = y < 8.0
    r = 1.0 / y
    return acc + (y - 0.5) * np.log(y) - y + _HALF_LOG_TWO_PI + r * _horner(r * r, _LG_COEFFS)
