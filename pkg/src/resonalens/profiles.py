"""Radial absorption profiles for complex coordinate stretching.

A profile is a real function ``stretch(r)`` that bends the radial
coordinate into the complex plane, ``r -> (1 + i*stretch(r)) * r``.
Everything downstream (stretched coefficients, the essential-spectrum
direction, coercivity certificates) derives from the stretch and its
radial derivative, so both are carried in closed form; finite
differences appear only in tests and in the numerical validator.

Supported kinds:

``affine``
    strength * (1 - r_start/r) beyond the onset; the classical choice.
    The imaginary part of the coordinate grows linearly.
``power``
    strength * (r - r_start)**exponent / r with integer exponent >= 1.
``smooth-chi2``
    strength * chi2((r - r_start)/(r_flat - r_start)); infinitely
    smooth, constant beyond r_flat.
``unscaled``
    identically zero.  Accepted only with ``verification_only=True``;
    used to verify the discretization against self-adjoint oracles.

All kinds vanish on [0, r_start] and are nondecreasing beyond it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "KINDS",
    "chi1",
    "chi2",
    "chi2_slope",
    "Profile",
    "make_profile",
    "AssumptionReport",
    "validate_assumptions",
]

KINDS = ("affine", "power", "smooth-chi2", "unscaled")
_SCALED_KINDS = ("affine", "power", "smooth-chi2")


def chi1(t):
    """Flat-at-zero cutoff: 0 for t <= 0, exp(-1/t) for t > 0.

    Underflow of exp(-1/t) for tiny positive t returns the correct
    limit value 0.0 and is deliberately left silent.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    with np.errstate(divide="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out if out.ndim else float(out)


def chi2(t):
    """Smooth transition: 0 below 0, 1 above 1, chi1(t)/(chi1(t)+chi1(1-t)) between."""
    t = np.asarray(t, dtype=float)
    a = chi1(t)
    b = chi1(1.0 - t)
    out = np.empty_like(np.atleast_1d(t))
    tt = np.atleast_1d(t)
    aa, bb = np.atleast_1d(a), np.atleast_1d(b)
    lo = tt <= 0.0
    hi = tt >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    out[mid] = aa[mid] / (aa[mid] + bb[mid])
    out = out.reshape(np.shape(t))
    return out if out.ndim else float(out)


def _chi1_slope(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    with np.errstate(divide="ignore", under="ignore"):
        tp = t[pos]
        out[pos] = np.exp(-1.0 / tp) / tp**2
    return out


def chi2_slope(t):
    """Derivative of chi2; zero outside (0, 1)."""
    t = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t)
    out = np.zeros_like(tt)
    mid = (tt > 0.0) & (tt < 1.0)
    tm = tt[mid]
    a = chi1(tm)
    b = chi1(1.0 - tm)
    da = _chi1_slope(tm)
    db = _chi1_slope(1.0 - tm)
    # d/dt [a/(a+b)] with b(t) = chi1(1-t), so b' = -db
    out[mid] = (da * b + a * db) / (a + b) ** 2
    out = out.reshape(np.shape(t))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Profile:
    """Evaluable absorption profile with closed-form radial derivative.

    Construct through :func:`make_profile`, which validates parameters.
    """

    kind: str
    strength: float = 1.0
    r_start: float = 1.0
    exponent: int = 1
    r_flat: float = field(default=0.0)  # smooth kind only; set by factory
    verification_only: bool = False

    # -- evaluation ----------------------------------------------------

    def stretch(self, r):
        """Relative imaginary stretch of the radius at r (vectorized)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "unscaled":
            out = np.zeros_like(r)
        elif self.kind == "affine":
            out = np.where(r > self.r_start, self.strength * (1.0 - self.r_start / np.where(r > 0, r, 1.0)), 0.0)
        elif self.kind == "power":
            d = np.maximum(r - self.r_start, 0.0)
            out = self.strength * d**self.exponent / np.where(r > 0, r, 1.0)
        else:  # smooth-chi2
            s = (r - self.r_start) / (self.r_flat - self.r_start)
            out = self.strength * chi2(s)
        return out if np.ndim(out) else float(out)

    def stretch_slope(self, r):
        """d(stretch)/dr, closed form (vectorized)."""
        r = np.asarray(r, dtype=float)
        rsafe = np.where(r > 0, r, 1.0)
        if self.kind == "unscaled":
            out = np.zeros_like(r)
        elif self.kind == "affine":
            out = np.where(r > self.r_start, self.strength * self.r_start / rsafe**2, 0.0)
        elif self.kind == "power":
            d = np.maximum(r - self.r_start, 0.0)
            m = self.exponent
            # quotient rule: d/dr (r - r1)^m / r = d^(m-1) (m r - d) / r^2,
            # which collapses to r1 / r^2 for m = 1
            if m == 1:
                num = self.r_start
            else:
                num = d ** (m - 1) * (m * rsafe - d)
            out = np.where(r > self.r_start, self.strength * num / rsafe**2, 0.0)
        else:
            w = self.r_flat - self.r_start
            s = (r - self.r_start) / w
            out = self.strength * chi2_slope(s) / w
        return out if np.ndim(out) else float(out)

    # -- derived constants --------------------------------------------

    @property
    def scaled(self) -> bool:
        return self.kind != "unscaled"

    @property
    def alpha_onset(self) -> float:
        """Limit of Im(jacobian) as r approaches r_start from outside.

        Continues the outer jacobian into [0, r_start]; the certificate
        symbol needs this to stay jump-free at the onset.
        """
        if self.kind == "affine":
            return self.strength
        if self.kind == "power":
            return self.strength if self.exponent == 1 else 0.0
        return 0.0

    def stretch_limit(self) -> float:
        """Limit of the stretch at infinity (inf for the power kind)."""
        if self.kind == "unscaled":
            return 0.0
        if self.kind == "power" and self.exponent >= 1:
            return float("inf") if self.exponent >= 2 else self.strength
        return self.strength

    def kinks(self) -> tuple[float, ...]:
        """Radii where the stretched coefficients lose smoothness."""
        if self.kind == "unscaled":
            return ()
        if self.kind == "smooth-chi2":
            return (self.r_start, self.r_flat)
        return (self.r_start,)


def make_profile(kind, strength=1.0, r_start=1.0, exponent=1,
                 r_flat=None, verification_only=False) -> Profile:
    """Validate parameters and build a profile.

    Args:
        kind: one of ``affine``, ``power``, ``smooth-chi2``, ``unscaled``.
        strength: plateau/amplitude parameter, > 0 for scaled kinds.
        r_start: onset radius, > 0; the stretch vanishes on [0, r_start].
        exponent: power kind only, integer >= 1.
        r_flat: smooth kind only; radius where the plateau is reached,
            defaults to r_start + 1.
        verification_only: must be True for the unscaled kind.

    Raises:
        ValidationError: on any parameter outside its domain.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown profile kind {kind!r}; expected one of {KINDS}")
    if not (r_start > 0.0):
        raise ValidationError(f"r_start must be positive, got {r_start}")
    if kind == "unscaled":
        if not verification_only:
            raise ValidationError(
                "the unscaled profile reveals no resonances; pass "
                "verification_only=True to use it for discretization checks")
        return Profile(kind, 0.0, float(r_start), 1, 0.0, True)
    if not (strength > 0.0):
        raise ValidationError(f"strength must be positive, got {strength}")
    if kind == "power":
        if int(exponent) != exponent or exponent < 1:
            raise ValidationError(f"power exponent must be an integer >= 1, got {exponent}")
    if kind == "smooth-chi2":
        r_flat = r_start + 1.0 if r_flat is None else float(r_flat)
        if not (r_flat > r_start):
            raise ValidationError(f"r_flat must exceed r_start, got {r_flat} <= {r_start}")
    else:
        r_flat = 0.0
    return Profile(kind, float(strength), float(r_start), int(exponent), r_flat,
                   bool(verification_only))


@dataclass(frozen=True)
class AssumptionReport:
    """Per-item outcome of the admissibility checks for a profile.

    ``items`` maps check name to (passed, witness); the witness is the
    radius at which the check failed, or None.  A profile needs an
    all-pass report before it is trusted in scaled assembly.
    """

    items: dict
    grid: np.ndarray

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.items.values())

    def failures(self) -> list:
        return [(name, w) for name, (ok, w) in self.items.items() if not ok]


_JUMP_TOL = 1e-6
_DIFF_CAP = 1e8


def _bisected_jump(fun, lo, hi, rounds=30):
    """Chase the larger half-interval jump; returns (jump, midpoint)."""
    flo, fhi = fun(lo), fun(hi)
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        fmid = fun(mid)
        if abs(fmid - flo) >= abs(fhi - fmid):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
        if hi - lo <= 0.0:
            break
    return abs(fhi - flo), 0.5 * (lo + hi)


def validate_assumptions(profile, grid=None) -> AssumptionReport:
    """Numerically check the admissibility assumptions of a profile.

    Works on any object exposing ``stretch(r)`` and ``r_start`` so that
    hand-built counterexamples can be screened too.  Checks, each with a
    witness radius on failure:

    * ``vanishes_before_start``: stretch == 0 on [0, r_start]
    * ``continuous``: adjacent-sample jumps contract under bisection to
      below 1e-6 (a genuine step keeps an O(1) jump)
    * ``positive_beyond_start``: stretch > 0 strictly beyond the onset
    * ``nondecreasing``: sampled monotonicity
    * ``smooth_beyond_start``: first/second divided differences beyond
      the onset are finite and bounded
    * ``tail_phase_ratio``: |scale|*jacobian / (scale*|jacobian|) -> 1
      along log-spaced tail samples in [100*r_start, 1000*r_start]
    * ``tail_phase_drift``: the radial derivative of both unit phases
      decays along the same tail samples

    The default grid has 600 points on [r_start/2, 10*r_start] plus the
    tail samples.
    """
    r1 = profile.r_start
    if grid is None:
        grid = np.concatenate([
            np.linspace(0.5 * r1, 10.0 * r1, 600),
            np.geomspace(10.0 * r1, 1000.0 * r1, 60),
        ])
    grid = np.sort(np.asarray(grid, dtype=float))
    # collapse duplicate samples so divided differences stay finite
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * np.abs(grid[1:])])
    grid = grid[keep]
    vals = np.array([float(profile.stretch(r)) for r in grid])
    items = {}

    inside = grid <= r1
    bad = inside & (np.abs(vals) > 1e-14)
    items["vanishes_before_start"] = (not bad.any(), grid[bad][0] if bad.any() else None)

    cont_ok, cont_w = True, None
    for i in range(len(grid) - 1):
        if abs(vals[i + 1] - vals[i]) <= _JUMP_TOL:
            continue
        jump, where = _bisected_jump(lambda r: float(profile.stretch(r)), grid[i], grid[i + 1])
        if jump > _JUMP_TOL:
            cont_ok, cont_w = False, where
            break
    items["continuous"] = (cont_ok, cont_w)

    beyond = grid > r1 * (1.0 + 1e-12)
    nonpos = beyond & (vals <= 0.0)
    items["positive_beyond_start"] = (not nonpos.any(), grid[nonpos][0] if nonpos.any() else None)

    drops = vals[1:] < vals[:-1] - 1e-12
    items["nondecreasing"] = (not drops.any(), grid[1:][drops][0] if drops.any() else None)

    bg, bv = grid[beyond], vals[beyond]
    smooth_ok, smooth_w = True, None
    if len(bg) >= 3:
        d1 = np.diff(bv) / np.diff(bg)
        d2 = np.diff(d1) / np.diff(0.5 * (bg[1:] + bg[:-1]))
        for arr, pts in ((d1, bg[1:]), (d2, bg[2:])):
            wild = ~np.isfinite(arr) | (np.abs(arr) > _DIFF_CAP)
            if wild.any():
                smooth_ok, smooth_w = False, pts[wild][0]
                break
    items["smooth_beyond_start"] = (smooth_ok, smooth_w)

    tail = np.geomspace(100.0 * r1, 1000.0 * r1, 16)
    st = np.array([float(profile.stretch(r)) for r in tail])
    sl = _slope_of(profile, tail)
    al = tail * sl + st
    scale = 1.0 + 1j * st
    jac = 1.0 + 1j * al
    ratio = np.abs(np.angle(scale * np.abs(jac) / (np.abs(scale) * jac)))
    ratio_ok = bool(np.all(np.diff(ratio) <= 1e-12 + 0.1 * ratio[:-1]) and ratio[-1] < 0.05)
    items["tail_phase_ratio"] = (ratio_ok, tail[-1] if not ratio_ok else None)

    # |d/dr (scale/|scale|)| = |stretch'| / (1 + stretch^2); same shape for the jacobian
    drift_scale = np.abs(sl) / (1.0 + st**2)
    al_slope = _alpha_slope_of(profile, tail)
    drift_jac = np.abs(al_slope) / (1.0 + al**2)
    drift = np.maximum(drift_scale, drift_jac)
    drift_ok = bool(np.all(np.diff(drift) <= 1e-12 + 0.1 * drift[:-1]) and drift[-1] < 0.05)
    items["tail_phase_drift"] = (drift_ok, tail[-1] if not drift_ok else None)

    return AssumptionReport(items=items, grid=grid)


def _slope_of(profile, r):
    if hasattr(profile, "stretch_slope"):
        return np.asarray(profile.stretch_slope(r), dtype=float)
    h = np.maximum(1e-6 * np.abs(r), 1e-9)
    up = np.array([float(profile.stretch(x)) for x in r + h])
    dn = np.array([float(profile.stretch(x)) for x in r - h])
    return (up - dn) / (2.0 * h)


def _alpha_slope_of(profile, r):
    # alpha = r * stretch' + stretch; centered difference of alpha
    h = np.maximum(1e-6 * np.abs(r), 1e-9)

    def alpha(x):
        return x * _slope_of(profile, x) + np.array([float(profile.stretch(v)) for v in x])

    return (alpha(r + h) - alpha(r - h)) / (2.0 * h)
