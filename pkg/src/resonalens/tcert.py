"""Coercivity diagnostics for the stretched pencil.

The stretched form loses coercivity but keeps it weakly: multiplying
the test function by a unimodular radial symbol, rotating the form, and
taking the real part bounds it from below by the energy norm.  This
module evaluates that symbol, builds an infinitely smooth surrogate
within a certified sup-norm distance (needed by the interpolation
argument behind convergence), measures the discrete commutator the
surrogate leaves behind, and assembles per-frequency coercivity
certificates that survive mesh refinement.

Branches: with ``q = -(omega * far_phase)**2`` the symbol and the
certificate rotation depend only on which half-turn arg(q) falls into,
"lower" for arg(q) in [-pi, 0) and "upper" for [0, pi).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConstructionError, ValidationError
from .profiles import Profile, chi2, chi2_slope
from .radialfem import (RadialMesh, _element_loop, _form_weights,
                        assemble_certificate_form, assemble_mode)
from .scaling import far_phase, phase_skew_bound, scale_factors

__all__ = [
    "principal_arg",
    "Symbol",
    "coercivity_symbol",
    "SmoothedSymbol",
    "smooth_symbol",
    "discrete_commutator_norm",
    "CoercivityCertificate",
    "coercivity_certificate",
]

_CERT_SLACK = 1e-8


def principal_arg(z: complex) -> float:
    """Argument in [-pi, pi): the negative real axis maps to -pi."""
    a = float(np.angle(z))
    return -np.pi if a >= np.pi else a


def _branch_of(profile: Profile, omega: complex) -> str:
    if omega == 0:
        raise ValidationError("omega must be nonzero")
    q = -((omega * far_phase(profile)) ** 2)
    return "lower" if principal_arg(q) < 0.0 else "upper"


@dataclass(frozen=True)
class Symbol:
    """Unimodular multiplier restoring one-sided coercivity.

    lower branch: conj(|jacobian_ext| / jacobian_ext)
    upper branch: conj(jacobian_ext * |scale|^2 / (scale^2 * |jacobian_ext|))

    Both are continuous on [0, inf) (the extended jacobian carries its
    onset limit inward) and converge to the far phase at infinity.
    """

    profile: Profile
    branch: str

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scale, _, ext = scale_factors(self.profile, r)
        if self.branch == "lower":
            out = np.conj(np.abs(ext) / ext)
        else:
            out = np.conj(ext * np.abs(scale) ** 2 / (scale**2 * np.abs(ext)))
        return out if np.ndim(out) else complex(out)

    def tail_value(self) -> complex:
        """Limit at infinity; equals the far phase on both branches."""
        return far_phase(self.profile)


def coercivity_symbol(profile: Profile, omega: complex) -> Symbol:
    """Branch-select the symbol for a frequency off the essential line."""
    if not profile.scaled:
        raise ValidationError("the unscaled profile needs no coercivity symbol")
    return Symbol(profile=profile, branch=_branch_of(profile, omega))


@dataclass(frozen=True, eq=False)
class SmoothedSymbol:
    """Infinitely smooth surrogate of a symbol, certified sup-close.

    Constant ``inner_value`` up to r_hat1 and ``tail_value`` beyond
    r_hat2; a least-squares polynomial bridged in with flat-at-ends
    chi2 blends between.  ``certified_gap`` is the dense-sampled
    sup-norm distance to the exact symbol (< epsilon by construction).
    """

    base: Symbol
    epsilon: float
    r_hat1: float
    r_hat2: float
    inner_value: complex
    tail_value: complex
    blend_lo: tuple          # (r_hat1, r_check1)
    blend_hi: tuple          # (r_check2, r_hat2)
    poly: object | None      # None when the symbol is already constant
    certified_gap: float

    def value_and_slope(self, r):
        shape = np.shape(r)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        v = np.full(r.shape, self.inner_value, dtype=complex)
        dv = np.zeros(r.shape, dtype=complex)
        if self.poly is None:
            return self._shaped(v, dv, shape)
        a1, c1 = self.blend_lo
        c2, a2 = self.blend_hi
        pv = self.poly(r)
        pd = self.poly.deriv()(r)

        lo = (r > a1) & (r <= c1)
        s = (r[lo] - a1) / (c1 - a1)
        w, dw = chi2(s), chi2_slope(s) / (c1 - a1)
        v[lo] = self.inner_value + w * (pv[lo] - self.inner_value)
        dv[lo] = dw * (pv[lo] - self.inner_value) + w * pd[lo]

        mid = (r > c1) & (r < c2)
        v[mid] = pv[mid]
        dv[mid] = pd[mid]

        hi = (r >= c2) & (r < a2)
        s = (r[hi] - c2) / (a2 - c2)
        w, dw = chi2(s), chi2_slope(s) / (a2 - c2)
        v[hi] = pv[hi] + w * (self.tail_value - pv[hi])
        dv[hi] = (1.0 - w) * pd[hi] + dw * (self.tail_value - pv[hi])

        tail = r >= a2
        v[tail] = self.tail_value
        dv[tail] = 0.0
        return self._shaped(v, dv, shape)

    @staticmethod
    def _shaped(v, dv, shape):
        if shape == ():
            return complex(v[0]), complex(dv[0])
        return v.reshape(shape), dv.reshape(shape)

    def __call__(self, r):
        return self.value_and_slope(r)[0]


def _certification_grid(profile: Profile, r_hat2: float) -> np.ndarray:
    r1 = profile.r_start
    return np.concatenate([
        np.linspace(r1, r_hat2, 8192),
        np.geomspace(r_hat2, 100.0 * r_hat2, 512),
    ])


def smooth_symbol(sym: Symbol, epsilon: float, r_hat1: float, r_hat2: float) -> SmoothedSymbol:
    """Build a C-infinity surrogate with sup gap below epsilon.

    The surrogate is pinned to the symbol's onset value up to r_hat1 and
    to its limit beyond r_hat2, so both pins must already be
    epsilon-representable there; otherwise the construction reports
    which radius to move.  In between, a polynomial approximant is
    escalated in degree until a dense a-posteriori sample certifies the
    gap.  A constant symbol is returned unchanged for any epsilon.
    """
    profile = sym.profile
    r1 = profile.r_start
    if not (epsilon > 0.0):
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if not (r1 < r_hat1 < r_hat2):
        raise ValidationError(
            f"need r_start < r_hat1 < r_hat2, got {r1}, {r_hat1}, {r_hat2}")

    inner = complex(sym(np.asarray(r1)))
    tail = sym.tail_value()
    grid = _certification_grid(profile, r_hat2)
    eta = sym(grid)

    if float(np.max(np.abs(eta - inner))) < 1e-14:
        return SmoothedSymbol(base=sym, epsilon=float(epsilon), r_hat1=float(r_hat1),
                              r_hat2=float(r_hat2), inner_value=inner, tail_value=inner,
                              blend_lo=(r_hat1, r_hat1), blend_hi=(r_hat2, r_hat2),
                              poly=None, certified_gap=0.0)

    inner_region = grid <= r_hat1
    gap_inner = float(np.max(np.abs(eta[inner_region] - inner)))
    if gap_inner >= epsilon:
        raise ConstructionError(
            f"symbol drifts {gap_inner:.3g} from its onset value before r_hat1; "
            "move r_hat1 closer to the onset radius")
    tail_region = grid >= r_hat2
    gap_tail = float(np.max(np.abs(eta[tail_region] - tail)))
    if gap_tail >= epsilon:
        raise ConstructionError(
            f"symbol is still {gap_tail:.3g} from its limit beyond r_hat2; "
            "enlarge r_hat2")

    width = r_hat2 - r_hat1
    mid_mask = (grid >= r_hat1) & (grid <= r_hat2)
    mid_r = grid[mid_mask]
    mid_eta = eta[mid_mask]

    # blend joints: stay where the pinned constants are still 0.9*eps-valid
    ok_in = np.abs(mid_eta - inner) < 0.9 * epsilon
    c1 = r_hat1 + 0.25 * width
    bad = np.nonzero(~ok_in)[0]
    if bad.size:
        c1 = min(c1, float(mid_r[max(bad[0] - 1, 0)]))
    ok_out = np.abs(mid_eta - tail) < 0.9 * epsilon
    c2 = r_hat2 - 0.25 * width
    bad = np.nonzero(~ok_out)[0]
    if bad.size:
        c2 = max(c2, float(mid_r[min(bad[-1] + 1, len(mid_r) - 1)]))
    if not (r_hat1 < c1 < c2 < r_hat2):
        c1 = r_hat1 + width / 3.0
        c2 = r_hat2 - width / 3.0

    last_gap = np.inf
    for degree in (3, 5, 8, 12, 16, 20, 24):
        poly = np.polynomial.Polynomial.fit(mid_r, mid_eta, degree)
        candidate = SmoothedSymbol(base=sym, epsilon=float(epsilon),
                                   r_hat1=float(r_hat1), r_hat2=float(r_hat2),
                                   inner_value=inner, tail_value=tail,
                                   blend_lo=(float(r_hat1), float(c1)),
                                   blend_hi=(float(c2), float(r_hat2)),
                                   poly=poly, certified_gap=np.nan)
        gap = float(np.max(np.abs(candidate(grid) - eta)))
        if gap < epsilon:
            return dataclasses.replace(candidate, certified_gap=gap)
        last_gap = min(last_gap, gap)
    raise ConstructionError(
        f"no approximant reached the sup gap {epsilon} (best {last_gap:.3g}); "
        "loosen epsilon or move r_hat1/r_hat2")


def discrete_commutator_norm(mesh: RadialMesh, profile: Profile,
                             sym_eps: SmoothedSymbol, n: int = 0) -> float:
    """Worst energy-norm interpolation residual of symbol-times-FEM.

    Computes sup over FEM functions u of
    ||(I - P)(eta_eps * u)||_X / ||u||_X, with P the nodal Lagrange
    interpolant onto the same mesh.  Since P reproduces nodal values,
    the per-basis residual localizes to
    (eta_eps(r) - eta_eps(node_j)) * phi_j(r), and the sup is the
    largest eigenvalue of the quadrature-assembled Hermitian residual
    form against the energy Gram.  First-order in the mesh width for
    smooth symbols; exactly zero for constant ones.
    """
    if mesh.variant != "truncated":
        raise ValidationError("the discrete commutator is assembled on truncated meshes")
    tol = 1e-9 * (mesh.r_end - mesh.r_b)
    for joint, name in ((sym_eps.r_hat1, "r_hat1"), (sym_eps.r_hat2, "r_hat2")):
        if mesh.r_b + tol < joint < mesh.r_end - tol:
            if np.min(np.abs(mesh.breakpoints - joint)) > tol:
                raise ValidationError(
                    f"smoothed-symbol joint {name}={joint} is not a mesh breakpoint")
    p = mesh.degree
    nn = n * (n + 1)
    size = mesh.n_elements * p + 1
    node_vals = sym_eps(mesh.nodes())
    B = np.zeros((size, size), dtype=complex)
    for e, h, rq, wq, vals, ders in _element_loop(mesh):
        _, _, _, g_rad, g_ang, g_mass = _form_weights(mesh, profile, rq)
        local_nodes = node_vals[e * p: e * p + p + 1]
        eta_q, eta_dq = sym_eps.value_and_slope(rq)
        # rho_k(r) = (eta(r) - eta(node_k)) phi_k(r)
        rho = (eta_q[None, :] - local_nodes[:, None]) * vals
        drho = eta_dq[None, :] * vals + (eta_q[None, :] - local_nodes[:, None]) * ders * (2.0 / h)
        B_loc = (h / 2.0) * np.einsum("kq,q,lq->kl", np.conj(drho), wq * g_rad, drho)
        B_loc += (h / 2.0) * np.einsum("kq,q,lq->kl", np.conj(rho), wq * (nn * g_ang + g_mass), rho)
        sl = slice(e * p, e * p + p + 1)
        B[sl, sl] += B_loc
    B = B[1:-1, 1:-1]
    B = 0.5 * (B + B.conj().T)
    G = assemble_mode(mesh, profile, n).gram
    w = scipy.linalg.eigh(B, G, eigvals_only=True)
    return float(np.sqrt(max(float(w[-1]), 0.0)))


@dataclass(frozen=True)
class CoercivityCertificate:
    omega: complex
    branch: str
    tau1: float
    rotation: complex
    bound: float        # cos(tau1/2) * min(1, |omega|^2)
    min_eig: float      # smallest eigenvalue of Herm(rotation * A1) against the Gram
    passed: bool


def coercivity_certificate(mesh: RadialMesh, profile: Profile, n: int,
                           omega: complex) -> CoercivityCertificate:
    """Certify the rotated lower bound for one frequency on one mesh.

    The comparison form's coefficient arguments are confined to
    [tau1, 0] (lower branch) or [0, tau1] (upper); rotating by
    ``rotation`` and taking Hermitian parts therefore dominates
    cos(tau1/2) * min(1, |omega|^2) times the energy Gram for every
    conforming space.  The certificate checks that discretely:
    min_eig >= bound - 1e-8, and refinement enlarges the space so a
    pass survives it.
    """
    if not profile.scaled:
        raise ValidationError("certificates need a scaled profile")
    if omega == 0:
        raise ValidationError("omega must be nonzero")
    d0 = far_phase(profile)
    if abs(np.real(1j * omega * d0)) < 1e-12 * abs(omega):
        raise ValidationError(f"omega={omega} lies on the essential line")
    q = -((omega * d0) ** 2)
    arg_q = principal_arg(q)
    tau = phase_skew_bound(profile)
    hat_arg = float(np.arctan(profile.alpha_onset))
    if arg_q < 0.0:
        branch = "lower"
        tau1 = min(-2.0 * tau, -hat_arg, arg_q)
        rotation = 1j * np.exp(-0.5j * (np.pi + tau1))
    else:
        branch = "upper"
        tau1 = max(2.0 * tau, hat_arg, arg_q)
        rotation = -1j * np.exp(0.5j * (np.pi - tau1))
    A1 = assemble_certificate_form(mesh, profile, n, branch, omega)
    G = assemble_mode(mesh, profile, n).gram
    H = 0.5 * (rotation * A1 + (rotation * A1).conj().T)
    w = scipy.linalg.eigh(H, G, eigvals_only=True)
    min_eig = float(w[0])
    bound = float(np.cos(tau1 / 2.0) * min(1.0, abs(omega) ** 2))
    return CoercivityCertificate(
        omega=complex(omega), branch=branch, tau1=float(tau1),
        rotation=complex(rotation), bound=bound, min_eig=min_eig,
        passed=bool(min_eig >= bound - _CERT_SLACK),
    )
