"""Derived quantities of a stretched radial coordinate.

With ``a = profile.stretch(r)`` the coordinate map is
``r_scaled = (1 + i*a) * r``.  Two complex factors drive every weak
form in the package:

* ``scale    = 1 + i*a``                (r_scaled / r)
* ``jacobian = d(r_scaled)/dr = 1 + i*(r*a' + a)``

``jacobian_ext`` continues the outer jacobian into [0, r_start] with
its onset limit, which keeps the certificate symbol jump-free.

The exact (truncation-free) variant composes the stretch with a
reparametrization that pulls infinity to a finite radius ``r_inf``;
:func:`exact_map_at` evaluates that composition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .profiles import Profile

__all__ = [
    "ScalingPoint",
    "scaling_at",
    "scale_factors",
    "far_phase",
    "phase_skew_bound",
    "ExactMap",
    "ExactPoint",
    "exact_map_at",
    "exact_factors",
]


@dataclass(frozen=True)
class ScalingPoint:
    r: float
    stretch: float
    scale: complex         # 1 + i*stretch
    jacobian: complex      # derivative of the scaled radius
    jacobian_ext: complex  # jacobian continued inward with its onset limit
    r_scaled: complex


def scale_factors(profile: Profile, r):
    """Vectorized (scale, jacobian, jacobian_ext) at radii ``r``."""
    r = np.asarray(r, dtype=float)
    a = np.asarray(profile.stretch(r), dtype=float)
    slope = np.asarray(profile.stretch_slope(r), dtype=float)
    scale = 1.0 + 1j * a
    jac = 1.0 + 1j * (r * slope + a)
    ext = np.where(r > profile.r_start, jac, 1.0 + 1j * profile.alpha_onset)
    return scale, jac, ext


def scaling_at(profile: Profile, r: float) -> ScalingPoint:
    """All stretched-coordinate quantities at a single radius r > 0."""
    if not (r > 0.0):
        raise ValidationError(f"radius must be positive, got {r}")
    scale, jac, ext = scale_factors(profile, np.asarray([r]))
    a = float(profile.stretch(r))
    return ScalingPoint(
        r=float(r), stretch=a, scale=complex(scale[0]),
        jacobian=complex(jac[0]), jacobian_ext=complex(ext[0]),
        r_scaled=complex(scale[0]) * float(r),
    )


def far_phase(profile: Profile) -> complex:
    """Unimodular limit of scale/|scale| at infinity.

    The essential spectrum of the stretched problem is the line
    ``{t / far_phase : t real}``; resonances are revealed on one side
    of it.
    """
    if not profile.scaled:
        raise ValidationError("the unscaled profile has no far phase")
    a = profile.stretch_limit()
    if np.isinf(a):
        return 1j
    return (1.0 + 1j * a) / abs(1.0 + 1j * a)


def phase_skew_bound(profile: Profile, samples: int = 4096) -> float:
    """Supremum of arg(jacobian/scale) over r > r_start.

    Sampled on a log grid reaching 1e4 * r_start, combined with the
    closed-form onset and tail limits of each kind.  Must stay strictly
    below pi/2 for the certificate machinery to apply.
    """
    if not profile.scaled:
        return 0.0
    r1 = profile.r_start
    rs = r1 * (1.0 + np.geomspace(1e-9, 1e4, samples))
    scale, jac, _ = scale_factors(profile, rs)
    angles = np.angle(jac / scale)
    skew = float(np.max(angles))
    # refine linearly around the coarse argmax: the log grid alone can
    # undershoot an interior maximum by a few 1e-6
    idx = int(np.argmax(angles))
    fine = np.linspace(rs[max(idx - 1, 0)], rs[min(idx + 1, len(rs) - 1)], 2001)
    scale2, jac2, _ = scale_factors(profile, fine)
    skew = max(skew, float(np.max(np.angle(jac2 / scale2))))
    if profile.kind in ("affine",) or (profile.kind == "power" and profile.exponent == 1):
        skew = max(skew, np.arctan(profile.strength))
    if skew >= np.pi / 2 - 1e-9:
        raise NumericalError("phase skew reaches pi/2; profile unusable for certificates")
    return skew


@dataclass(frozen=True)
class ExactMap:
    """Reparametrization pulling r = infinity to the finite radius r_inf.

    ``log`` kind:   r_mapped = r_start + log((r_inf - r_start)/(r_inf - r))
    ``power`` kind: r_mapped = (r_inf - r)**beta - (r_inf - r_start)**beta + r_start
    with beta in (-2/3, 0).  Both are the identity on [0, r_start].
    """

    kind: str
    r_inf: float
    beta: float = -0.5

    def __post_init__(self):
        if self.kind not in ("log", "power"):
            raise ValidationError(f"unknown exact map kind {self.kind!r}")
        if not (self.r_inf > 0.0):
            raise ValidationError(f"r_inf must be positive, got {self.r_inf}")
        if self.kind == "power" and not (-2.0 / 3.0 < self.beta < 0.0):
            raise ValidationError(f"beta must lie in (-2/3, 0), got {self.beta}")


@dataclass(frozen=True)
class ExactPoint:
    r: float
    r_mapped: float
    deriv: float          # d(r_mapped)/dr, positive
    ratio: float          # r_mapped / r
    scale: complex        # stretch factors evaluated at r_mapped
    jacobian: complex
    jacobian_ext: complex


def _check_exact_profile(profile: Profile):
    if profile.kind == "power":
        raise ValidationError(
            "the exact variant needs a bounded stretch at infinity; "
            "power-kind profiles are rejected")
    if not profile.scaled:
        raise ValidationError("the exact variant needs a scaled profile")


def exact_factors(emap: ExactMap, profile: Profile, r):
    """Vectorized (r_mapped, deriv, ratio, scale, jacobian, jacobian_ext)."""
    _check_exact_profile(profile)
    r1 = profile.r_start
    if not (r1 < emap.r_inf):
        raise ValidationError(f"r_inf={emap.r_inf} must exceed the onset radius {r1}")
    r = np.asarray(r, dtype=float)
    if np.any(r >= emap.r_inf):
        raise ValidationError("exact map evaluated at or beyond r_inf")
    if np.any(r <= 0.0):
        raise ValidationError("exact map evaluated at a nonpositive radius")
    gap = emap.r_inf - r
    gap0 = emap.r_inf - r1
    if emap.kind == "log":
        rm = np.where(r > r1, r1 + np.log(gap0 / gap), r)
        dm = np.where(r > r1, 1.0 / gap, 1.0)
    else:
        b = emap.beta
        rm = np.where(r > r1, gap**b - gap0**b + r1, r)
        dm = np.where(r > r1, -b * gap ** (b - 1.0), 1.0)
    ratio = rm / r
    scale, jac, ext = scale_factors(profile, rm)
    return rm, dm, ratio, scale, jac, ext


def exact_map_at(emap: ExactMap, profile: Profile, r: float) -> ExactPoint:
    """Composed map quantities at a single radius r in (0, r_inf)."""
    rm, dm, ratio, scale, jac, ext = exact_factors(emap, profile, np.asarray([float(r)]))
    return ExactPoint(
        r=float(r), r_mapped=float(rm[0]), deriv=float(dm[0]), ratio=float(ratio[0]),
        scale=complex(scale[0]), jacobian=complex(jac[0]), jacobian_ext=complex(ext[0]),
    )
