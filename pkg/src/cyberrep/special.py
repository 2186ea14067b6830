"""Error function and its inverses.

``erf_like`` is the normalized Gaussian integral (2/sqrt(pi)) * int_0^x exp(-t^2) dt.
The inverses start from Giles' single-precision rational approximation and
are polished with Newton steps against the forward function, which brings
them to full double precision.

``erfc_like_inv`` inverts the complement 1 - erf(x) directly.  The
equilibrium formulas need erf^{-1}(s) for s within 1e-160 of one, where
forming s itself already destroys every significant digit.
"""
from __future__ import annotations

import numpy as np
from scipy import special

_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)

# Giles, "Approximating the erfinv function" (GPU Computing Gems, 2010).
_GILES_CENTRAL = (
    2.81022636e-08, 3.43273939e-07, -3.5233877e-06, -4.39150654e-06,
    0.00021858087, -0.00125372503, -0.00417768164, 0.246640727, 1.50140941,
)
_GILES_TAIL = (
    -0.000200214257, 0.000100950558, 0.00134934322, -0.00367342844,
    0.00573950773, -0.0076224613, 0.00943887047, 1.00167406, 2.83297682,
)
# Giles' tail polynomial is only fit over the float32 range of 1 - x.
_GILES_W_MAX = 16.0


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def erf_like(x):
    """(2/sqrt(pi)) * integral of exp(-t^2) from 0 to x."""
    return _scalar_or_array(special.erf(np.asarray(x, dtype=float)), x)


def erfc_like(x):
    """1 - erf_like(x) without cancellation for large x."""
    return _scalar_or_array(special.erfc(np.asarray(x, dtype=float)), x)


def log_erfc_like(x):
    """log(1 - erf_like(x)); finite for every x where the result is representable in log form."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, np.log(special.erfcx(np.maximum(x, 0.0))) - x * x,
                       np.log(special.erfc(np.minimum(x, 0.0))))
    return _scalar_or_array(out, x)


def _giles(z):
    """Initial guess for x >= 0 with erfc(x) = z, z in (0, 1]."""
    w = -np.log(z * (2.0 - z))
    central = w < 5.0
    wc = w - 2.5
    wt = np.sqrt(np.maximum(w, 0.0)) - 3.0
    pc = np.zeros_like(w)
    pt = np.zeros_like(w)
    for coef in _GILES_CENTRAL:
        pc = coef + pc * wc
    for coef in _GILES_TAIL:
        pt = coef + pt * wt
    guess = np.where(central, pc, pt) * (1.0 - z)
    # erfc(x) ~ exp(-x^2) / (x sqrt(pi)) far in the tail
    t = -np.log(np.maximum(z, np.finfo(float).tiny))
    asym = np.sqrt(np.maximum(t - 0.5 * np.log(np.pi * np.maximum(t, 1.0)), 0.0))
    return np.where(w < _GILES_W_MAX, guess, asym)


def erfc_like_inv(z, *, max_iter: int = 60):
    """Return x >= 0 with erfc_like(x) = z for z in (0, 1].

    The Newton iteration runs on log erfc, which is smooth and concave, so it
    converges from the asymptotic start even when z is near the smallest
    positive double.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr > 0.0)) or np.any(z_arr > 1.0):
        raise ValueError("erfc_like_inv: argument must lie in (0, 1]")
    x = _giles(z_arr)
    log_z = np.log(z_arr)
    for _ in range(max_iter):
        g = np.log(special.erfcx(x)) - x * x - log_z
        dg = -_TWO_OVER_SQRT_PI / special.erfcx(x)
        step = g / dg
        x = np.maximum(x - step, 0.0)
        if np.all(np.abs(step) <= 4e-16 * np.maximum(np.abs(x), 1.0)):
            break
    return _scalar_or_array(x, z)


def erf_like_inv(y, *, newton_steps: int = 3):
    """Inverse of ``erf_like`` on (-1, 1).

    Small arguments are refined with Newton on erf itself; for |y| > 1/2 the
    complement 1 - |y| is exact in floating point and the tail solver is used.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(~(np.abs(y_arr) < 1.0)):
        raise ValueError("erf_like_inv: argument must lie in (-1, 1)")
    a = np.abs(y_arr)
    x = _giles(1.0 - a)
    small = a <= 0.5
    for _ in range(newton_steps):
        x = x - (special.erf(x) - a) / (_TWO_OVER_SQRT_PI * np.exp(-x * x))
    if np.any(~small):
        x = np.where(small, x, erfc_like_inv(np.where(small, 1.0, 1.0 - a)))
    return _scalar_or_array(np.copysign(x, y_arr), y)
