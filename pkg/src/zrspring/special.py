"""Guarded scalar functions of the dimensionless spring argument ``eps``.

All five functions are even in ``eps`` and analytic at zero.  Near zero the
closed forms lose digits to cancellation (or divide 0 by 0), so each one
switches to its Taylor series below a crossover threshold.  Everything is
vectorised: scalars in give floats out, arrays in give arrays out.
"""

import numpy as np

# series branch is used strictly below these
SERIES_EPS_CARDINAL = 1e-2
SERIES_EPS_H = 5e-2

# Taylor coefficients in powers of eps**2, highest order first (for polyval).
# sinh(e)/e = sum e^2k / (2k+1)!
_SINHC = [1.0 / 362880.0, 1.0 / 5040.0, 1.0 / 120.0, 1.0 / 6.0, 1.0]
# (e cosh e - sinh e)/e^3 = sum_{k>=1} 2k e^(2k-2) / (2k+1)!
_H = [2.0 * k / float(np.prod(np.arange(1, 2 * k + 2, dtype=float))) for k in range(7, 0, -1)]


def _alternate(coeffs):
    # substitute e^2 -> -e^2 in a polynomial given highest order first
    n = len(coeffs) - 1
    return [c * (-1.0) ** (n - i) for i, c in enumerate(coeffs)]


_SINC = _alternate(_SINHC)
_H_UNDER = _alternate(_H)


def _guarded(eps, threshold, series, direct):
    e = np.abs(np.asarray(eps, dtype=float))
    small = e < threshold
    e2 = e * e
    out = np.polyval(series, e2)
    if not np.all(small):
        # dummy argument keeps the direct branch away from 0/0
        safe = np.where(small, 1.0, e)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.where(small, out, direct(safe))
    return out[()] if out.ndim == 0 else out


def cosh_e(eps):
    """(e^eps + e^-eps)/2; exactly 1 at eps = 0."""
    return np.cosh(np.asarray(eps, dtype=float))


def sinhc(eps):
    """sinh(eps)/eps with the removable singularity filled in (value 1 at 0)."""
    return _guarded(eps, SERIES_EPS_CARDINAL, _SINHC, lambda e: np.sinh(e) / e)


def sinc_e(eps):
    """Unnormalised sinc, sin(eps)/eps, with value 1 at 0."""
    return _guarded(eps, SERIES_EPS_CARDINAL, _SINC, lambda e: np.sin(e) / e)


def h_over(eps):
    """((eps-1) e^eps + (eps+1) e^-eps) / (2 eps^3), tending to 1/3 at 0.

    Equal to (eps cosh eps - sinh eps)/eps^3, i.e. twice the derivative of
    sinhc with respect to eps**2.
    """
    return _guarded(
        eps, SERIES_EPS_H, _H, lambda e: (e * np.cosh(e) - np.sinh(e)) / (e * e * e)
    )


def h_under(eps):
    """(sin eps - eps cos eps) / eps^3, tending to 1/3 at 0."""
    return _guarded(
        eps, SERIES_EPS_H, _H_UNDER, lambda e: (np.sin(e) - e * np.cos(e)) / (e * e * e)
    )
