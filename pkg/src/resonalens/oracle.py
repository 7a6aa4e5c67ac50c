"""Closed-form reference spectra for the exterior sphere problem.

Outgoing waves outside a sphere of radius r_b separate into spherical
Hankel functions of the first kind.  For each mode index n,

    h1_n(z) = c_n * exp(i z) * p_n(z) / z**(n+1),

with p_n a degree-n polynomial.  Dirichlet resonances of the exterior
problem are therefore exactly the roots of p_n scaled by 1/r_b; they
all lie strictly below the real axis.  The polynomials satisfy

    p_0 = 1,  p_1 = z + i,  p_{k+1} = (2k+1)*i*p_k + z**2 * p_{k-1},

which follows from the three-term recurrence of the spherical Bessel
family.  Frozen anchor: p_2 = z**2 + 3iz - 3 with roots
+-sqrt(3)/2 - 1.5i.

The annulus (r_b, R) with Dirichlet walls provides a second,
self-adjoint oracle for unscaled verification runs: for n = 0 the
eigenfrequencies are exactly m*pi/(R - r_b); for n >= 1 they are the
positive roots of the spherical Bessel cross product
j_n(w r_b) y_n(w R) - j_n(w R) y_n(w r_b).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import spherical_jn, spherical_yn

from .errors import NumericalError, ValidationError

__all__ = ["MAX_MODE", "hankel_polynomial", "hankel_resonances", "annulus_dirichlet_eigs"]

MAX_MODE = 25  # coefficients grow like (2n-1)!!; root conditioning degrades beyond


def hankel_polynomial(n: int) -> np.ndarray:
    """Ascending coefficients of the degree-n outgoing-wave polynomial p_n."""
    if int(n) != n or n < 0:
        raise ValidationError(f"mode index must be a nonnegative integer, got {n}")
    if n > MAX_MODE:
        raise ValidationError(f"mode index {n} exceeds the supported cap {MAX_MODE}")
    n = int(n)
    p_prev = np.array([1.0 + 0.0j])
    if n == 0:
        return p_prev
    p_cur = np.array([1j, 1.0 + 0.0j])
    for k in range(1, n):
        nxt = np.zeros(k + 2, dtype=complex)
        nxt[: k + 1] += (2 * k + 1) * 1j * p_cur
        nxt[2:] += p_prev
        p_prev, p_cur = p_cur, nxt
    return p_cur


def _polish(coeffs: np.ndarray, z: complex, n: int) -> complex:
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    for _ in range(60):
        val = poly(z)
        if abs(val) / (1.0 + abs(z)) ** n <= 1e-12:
            return z
        dz = dpoly(z)
        if dz == 0:
            break
        z = z - val / dz
    if abs(poly(z)) / (1.0 + abs(z)) ** n > 1e-10:
        raise NumericalError(f"root polish stalled for mode {n} near {z}")
    return z


def hankel_resonances(n: int, r_b: float) -> np.ndarray:
    """Exterior Dirichlet resonances of the sphere of radius r_b, mode n.

    Companion-matrix roots of p_n polished by Newton iteration, scaled by
    1/r_b, sorted by real part then imaginary part.  Mode 0 has none.
    """
    if not (r_b > 0.0):
        raise ValidationError(f"r_b must be positive, got {r_b}")
    coeffs = hankel_polynomial(n)
    if n == 0:
        return np.array([], dtype=complex)
    roots = np.roots(coeffs[::-1])
    roots = np.array([_polish(coeffs, z, n) for z in roots])
    omegas = roots / r_b
    order = np.lexsort((omegas.imag, omegas.real))
    return omegas[order]


def annulus_dirichlet_eigs(r_b: float, r_out: float, n: int, count: int) -> np.ndarray:
    """First ``count`` Dirichlet eigenfrequencies of the annulus (r_b, r_out).

    Mode 0 is closed form; higher modes bracket the sign changes of the
    spherical Bessel cross product and bisect.
    """
    if not (0.0 < r_b < r_out):
        raise ValidationError(f"need 0 < r_b < r_out, got r_b={r_b}, r_out={r_out}")
    if int(n) != n or n < 0:
        raise ValidationError(f"mode index must be a nonnegative integer, got {n}")
    if int(count) != count or count < 1:
        raise ValidationError(f"count must be a positive integer, got {count}")
    width = r_out - r_b
    if n == 0:
        return np.arange(1, count + 1) * np.pi / width

    def cross(w):
        return (spherical_jn(n, w * r_b) * spherical_yn(n, w * r_out)
                - spherical_jn(n, w * r_out) * spherical_yn(n, w * r_b))

    roots = []
    step = np.pi / width / 8.0
    w_lo = 1e-6
    f_lo = cross(w_lo)
    w = w_lo
    # asymptotic spacing is pi/width; the scan step oversamples by 8
    for _ in range(100000):
        if len(roots) >= count:
            break
        w_next = w + step
        f_next = cross(w_next)
        if np.isfinite(f_lo) and np.isfinite(f_next) and f_lo * f_next < 0.0:
            roots.append(brentq(cross, w, w_next, xtol=1e-14, rtol=1e-15))
        w, f_lo = w_next, f_next
    else:
        raise NumericalError(f"failed to bracket {count} annulus eigenvalues")
    return np.array(roots[:count])
