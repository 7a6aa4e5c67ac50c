"""Per-mode radial finite elements for the stretched exterior problem.

Separating u = f(r) * Y_n^m reduces the stretched sesquilinear forms to
one-dimensional integrals in f.  With ``scale`` and ``jacobian`` from
:mod:`resonalens.scaling`, the pencil for mode n reads

    S[i,j] = int (scale^2/jacobian) phi_i' phi_j' r^2 dr
           + n(n+1) int jacobian phi_i phi_j dr
    M[i,j] = int scale^2 jacobian phi_i phi_j r^2 dr

(the angular block carries no r^2: the r^-2 of the surface gradient
cancels it), and the energy Gram G takes absolute values of the same
complex weights.  The exact variant composes every weight with a
reparametrization that pulls infinity to a finite radius; its extra
factors are real and positive and stay outside the absolute values.

Elements are nodal Lagrange on Gauss-Lobatto points, continuous across
breakpoints, with Dirichlet rows eliminated at both ends.  Coefficient
kinks (profile onset, plateau radius) must coincide with breakpoints;
the assembler refuses misaligned meshes instead of losing convergence
orders silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from .errors import ValidationError
from .profiles import Profile
from .scaling import ExactMap, exact_factors, far_phase, scale_factors

__all__ = [
    "lobatto_nodes",
    "RadialMesh",
    "build_mesh",
    "refine_mesh",
    "ModeMatrices",
    "assemble_mode",
    "assemble_certificate_form",
    "tail_norm",
    "best_approximation_error",
    "export_triplets",
]

_ALIGN_RTOL = 1e-9


def lobatto_nodes(p: int) -> np.ndarray:
    """The p+1 Gauss-Lobatto points on [-1, 1]."""
    if int(p) != p or p < 1:
        raise ValidationError(f"degree must be an integer >= 1, got {p}")
    if p == 1:
        return np.array([-1.0, 1.0])
    c = np.zeros(p + 1)
    c[p] = 1.0
    interior = np.polynomial.legendre.legroots(np.polynomial.legendre.legder(c))
    return np.concatenate(([-1.0], np.real(interior), [1.0]))


def _lagrange_table(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the Lagrange basis for ``nodes`` at ``x``."""
    m = len(nodes)
    x = np.asarray(x, dtype=float)
    vals = np.ones((m, len(x)))
    for k in range(m):
        for j in range(m):
            if j != k:
                vals[k] *= (x - nodes[j]) / (nodes[k] - nodes[j])
    ders = np.zeros((m, len(x)))
    for k in range(m):
        acc = np.zeros_like(x)
        for i in range(m):
            if i == k:
                continue
            term = np.full_like(x, 1.0 / (nodes[k] - nodes[i]))
            for j in range(m):
                if j == k or j == i:
                    continue
                term *= (x - nodes[j]) / (nodes[k] - nodes[j])
            acc += term
        ders[k] = acc
    return vals, ders


@lru_cache(maxsize=128)
def _reference(p: int, q: int):
    nodes = lobatto_nodes(p)
    xi, wq = roots_legendre(q)
    vals, ders = _lagrange_table(nodes, xi)
    return nodes, xi, wq, vals, ders


@dataclass(frozen=True, eq=False)
class RadialMesh:
    r_b: float
    r_end: float
    breakpoints: np.ndarray
    degree: int
    quad_order: int
    variant: str = "truncated"
    exact_map: ExactMap | None = None

    @property
    def n_elements(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def n_dofs(self) -> int:
        return self.n_elements * self.degree - 1

    @property
    def h_max(self) -> float:
        return float(np.max(np.diff(self.breakpoints)))

    def nodes(self) -> np.ndarray:
        """All Lagrange node positions, boundary nodes included."""
        ref = lobatto_nodes(self.degree)
        out = np.empty(self.n_elements * self.degree + 1)
        for e in range(self.n_elements):
            left, right = self.breakpoints[e], self.breakpoints[e + 1]
            loc = left + (ref + 1.0) * 0.5 * (right - left)
            out[e * self.degree: (e + 1) * self.degree + 1] = loc
        return out

    def element_quad_order(self, e: int) -> int:
        # the exact variant's weights are singular near r_inf; give the
        # last element a taller rule
        if self.variant == "exact" and e == self.n_elements - 1:
            return max(self.quad_order, 2 * self.degree + 6)
        return self.quad_order


def build_mesh(r_b, r_end, elements, degree, quad_order=None, variant="truncated",
               exact_map=None, align=()) -> RadialMesh:
    """Uniform breakpoints on [r_b, r_end], refined so every align point
    is a breakpoint.

    Align points equal to an endpoint are dropped; points outside the
    closed interval raise.  The exact variant requires ``exact_map`` and
    r_end equal to its r_inf (the far endpoint carries the image of
    infinity and its Dirichlet row).
    """
    if not (0.0 < r_b < r_end):
        raise ValidationError(f"need 0 < r_b < r_end, got r_b={r_b}, r_end={r_end}")
    if int(elements) != elements or elements < 1:
        raise ValidationError(f"elements must be a positive integer, got {elements}")
    if int(degree) != degree or degree < 1:
        raise ValidationError(f"degree must be a positive integer, got {degree}")
    degree = int(degree)
    if quad_order is None:
        quad_order = 2 * degree + 2
    if int(quad_order) != quad_order or quad_order < 2 * degree + 2:
        raise ValidationError(
            f"quad_order must be an integer >= {2 * degree + 2}, got {quad_order}")
    if variant not in ("truncated", "exact"):
        raise ValidationError(f"unknown mesh variant {variant!r}")
    if variant == "exact":
        if exact_map is None:
            raise ValidationError("exact variant requires an exact_map")
        if abs(r_end - exact_map.r_inf) > _ALIGN_RTOL * exact_map.r_inf:
            raise ValidationError(
                f"exact meshes must end at the map's r_inf={exact_map.r_inf}, got r_end={r_end}")
        r_end = exact_map.r_inf
    else:
        exact_map = None

    tol = _ALIGN_RTOL * (r_end - r_b)
    bps = list(np.linspace(r_b, r_end, int(elements) + 1))
    for a in np.atleast_1d(np.asarray(align, dtype=float)):
        if a < r_b - tol or a > r_end + tol:
            raise ValidationError(f"align point {a} lies outside [{r_b}, {r_end}]")
        if a <= r_b + tol or a >= r_end - tol:
            continue
        if min(abs(a - b) for b in bps) > tol:
            bps.append(float(a))
    breakpoints = np.array(sorted(bps))
    return RadialMesh(float(r_b), float(r_end), breakpoints, degree, int(quad_order),
                      variant, exact_map)


def refine_mesh(mesh: RadialMesh) -> RadialMesh:
    """Uniform refinement: every element split at its midpoint."""
    mids = 0.5 * (mesh.breakpoints[:-1] + mesh.breakpoints[1:])
    bps = np.sort(np.concatenate([mesh.breakpoints, mids]))
    return RadialMesh(mesh.r_b, mesh.r_end, bps, mesh.degree, mesh.quad_order,
                      mesh.variant, mesh.exact_map)


@dataclass(eq=False)
class ModeMatrices:
    """Assembled pencil (stiffness, mass) and energy Gram for one mode."""

    stiffness: np.ndarray
    mass: np.ndarray
    gram: np.ndarray
    mesh: RadialMesh
    profile: Profile
    n: int

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]


def _check_kinks(mesh: RadialMesh, profile: Profile):
    tol = _ALIGN_RTOL * (mesh.r_end - mesh.r_b)
    kinks = list(profile.kinks())
    if mesh.variant == "exact":
        emap = mesh.exact_map
        mapped = [profile.r_start]
        for k in profile.kinks():
            if k > profile.r_start:
                r = _exact_inverse(emap, profile.r_start, k)
                if r is not None:
                    mapped.append(r)
        kinks = mapped
    for k in kinks:
        if k <= mesh.r_b + tol or k >= mesh.r_end - tol:
            continue
        if np.min(np.abs(mesh.breakpoints - k)) > tol:
            raise ValidationError(
                f"coefficient kink at r={k:.12g} is not a mesh breakpoint; "
                "pass it through build_mesh(align=...)")


def _exact_inverse(emap: ExactMap, r_start: float, rm: float):
    """Radius whose image under the map is rm (> r_start); None if beyond."""
    gap0 = emap.r_inf - r_start
    if rm <= r_start:
        return rm
    if emap.kind == "log":
        gap = gap0 * np.exp(r_start - rm)
    else:
        base = rm - r_start + gap0**emap.beta
        if base <= 0:
            return None
        gap = base ** (1.0 / emap.beta)
    r = emap.r_inf - gap
    return float(r) if r < emap.r_inf else None


def _form_weights(mesh: RadialMesh, profile: Profile, r: np.ndarray):
    """Pencil and Gram weights at radii r; the n(n+1) factor is applied later."""
    if mesh.variant == "truncated":
        scale, jac, _ = scale_factors(profile, r)
        rad = scale**2 / jac * r**2
        ang = jac
        mass = scale**2 * jac * r**2
        g_rad = np.abs(scale**2 / jac) * r**2
        g_ang = np.abs(jac)
        g_mass = np.abs(scale**2 * jac) * r**2
    else:
        rm, dm, _, scale, jac, _ = exact_factors(mesh.exact_map, profile, r)
        rad = scale**2 / jac * rm**2 / dm
        ang = dm * jac
        mass = dm * scale**2 * jac * rm**2
        g_rad = np.abs(scale**2 / jac) * rm**2 / dm
        g_ang = dm * np.abs(jac)
        g_mass = dm * np.abs(scale**2 * jac) * rm**2
    return rad, ang, mass, g_rad, g_ang, g_mass


def _element_loop(mesh):
    p = mesh.degree
    for e in range(mesh.n_elements):
        left = mesh.breakpoints[e]
        right = mesh.breakpoints[e + 1]
        _, xi, wq, vals, ders = _reference(p, mesh.element_quad_order(e))
        h = right - left
        rq = left + (xi + 1.0) * 0.5 * h
        yield e, h, rq, wq, vals, ders


def assemble_mode(mesh: RadialMesh, profile: Profile, n: int) -> ModeMatrices:
    """Assemble stiffness, mass, and Gram for mode n on the given mesh."""
    if int(n) != n or n < 0:
        raise ValidationError(f"mode index must be a nonnegative integer, got {n}")
    _check_kinks(mesh, profile)
    n = int(n)
    p = mesh.degree
    nn = n * (n + 1)
    size = mesh.n_elements * p + 1
    S = np.zeros((size, size), dtype=complex)
    M = np.zeros((size, size), dtype=complex)
    G = np.zeros((size, size), dtype=complex)
    for e, h, rq, wq, vals, ders in _element_loop(mesh):
        rad, ang, mass, g_rad, g_ang, g_mass = _form_weights(mesh, profile, rq)
        sl = slice(e * p, e * p + p + 1)
        S[sl, sl] += (2.0 / h) * np.einsum("kq,q,lq->kl", ders, wq * rad, ders)
        S[sl, sl] += (h / 2.0) * nn * np.einsum("kq,q,lq->kl", vals, wq * ang, vals)
        M[sl, sl] += (h / 2.0) * np.einsum("kq,q,lq->kl", vals, wq * mass, vals)
        G[sl, sl] += (2.0 / h) * np.einsum("kq,q,lq->kl", ders, wq * g_rad, ders)
        G[sl, sl] += (h / 2.0) * np.einsum("kq,q,lq->kl", vals, wq * (nn * g_ang + g_mass), vals)
    S = S[1:-1, 1:-1]
    M = M[1:-1, 1:-1]
    G = G[1:-1, 1:-1]
    G = 0.5 * (G + G.conj().T)
    return ModeMatrices(S, M, G, mesh, profile, n)


def assemble_certificate_form(mesh: RadialMesh, profile: Profile, n: int,
                              branch: str, omega: complex) -> np.ndarray:
    """Rotated-comparison form used by the coercivity certificate.

    The weights replace each pencil coefficient by a version whose
    argument is confined to one half-turn sector; the certificate then
    rotates the assembled matrix and bounds its Hermitian part from
    below against the Gram.  Truncated meshes only.
    """
    if mesh.variant != "truncated":
        raise ValidationError("certificate forms are defined on truncated meshes")
    if branch not in ("lower", "upper"):
        raise ValidationError(f"branch must be 'lower' or 'upper', got {branch!r}")
    if not profile.scaled:
        raise ValidationError("certificates need a scaled profile")
    if int(n) != n or n < 0:
        raise ValidationError(f"mode index must be a nonnegative integer, got {n}")
    _check_kinks(mesh, profile)
    d0 = far_phase(profile)
    mass_factor = -((omega * d0) ** 2)
    n = int(n)
    p = mesh.degree
    nn = n * (n + 1)
    size = mesh.n_elements * p + 1
    A = np.zeros((size, size), dtype=complex)
    for e, h, rq, wq, vals, ders in _element_loop(mesh):
        scale, jac, ext = scale_factors(profile, rq)
        if branch == "lower":
            rad = scale**2 * np.abs(ext) / (jac * ext) * rq**2
            ang = jac * np.abs(ext) / ext
        else:
            rad = ext * np.abs(scale**2) / (jac * np.abs(ext)) * rq**2
            ang = jac * ext * np.abs(scale**2) / (scale**2 * np.abs(ext))
        mass = mass_factor * np.abs(scale**2 * jac) * rq**2
        sl = slice(e * p, e * p + p + 1)
        A[sl, sl] += (2.0 / h) * np.einsum("kq,q,lq->kl", ders, wq * rad, ders)
        A[sl, sl] += (h / 2.0) * np.einsum("kq,q,lq->kl", vals, wq * (nn * ang + mass), vals)
    return A[1:-1, 1:-1]


def _full_values(mesh: RadialMesh, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (mesh.n_dofs,):
        raise ValidationError(
            f"coefficient vector has length {coeffs.shape}, mesh has {mesh.n_dofs} dofs")
    full = np.zeros(mesh.n_elements * mesh.degree + 1, dtype=complex)
    full[1:-1] = coeffs
    return full


def tail_norm(mats: ModeMatrices, coeffs: np.ndarray, rho: float) -> float:
    """Energy norm of the FEM function restricted to [rho, r_end].

    rho = r_b returns the full energy norm; rho = r_end returns 0.
    """
    mesh = mats.mesh
    if not (mesh.r_b <= rho <= mesh.r_end):
        raise ValidationError(f"rho={rho} outside [{mesh.r_b}, {mesh.r_end}]")
    full = _full_values(mesh, coeffs)
    p = mesh.degree
    ref_nodes = lobatto_nodes(p)
    nn = mats.n * (mats.n + 1)
    total = 0.0
    for e in range(mesh.n_elements):
        left, right = mesh.breakpoints[e], mesh.breakpoints[e + 1]
        lo = max(left, rho)
        if right - lo <= 0.0:
            continue
        h = right - left
        xi, wq = roots_legendre(mesh.element_quad_order(e))
        rq = lo + (xi + 1.0) * 0.5 * (right - lo)
        xi_loc = 2.0 * (rq - left) / h - 1.0
        vals, ders = _lagrange_table(ref_nodes, xi_loc)
        c = full[e * p: e * p + p + 1]
        u = c @ vals
        du = (c @ ders) * (2.0 / h)
        _, _, _, g_rad, g_ang, g_mass = _form_weights(mesh, mats.profile, rq)
        density = g_rad * np.abs(du) ** 2 + (nn * g_ang + g_mass) * np.abs(u) ** 2
        total += float((right - lo) / 2.0 * np.sum(wq * density))
    return float(np.sqrt(max(total, 0.0)))


def _breakpoints_nested(coarse: np.ndarray, fine: np.ndarray, tol: float) -> bool:
    return all(np.min(np.abs(fine - b)) <= tol for b in coarse)


def best_approximation_error(fine_mats: ModeMatrices, coeffs: np.ndarray,
                             coarse_mesh: RadialMesh) -> float:
    """Energy-norm distance from a fine FEM function to the coarse space.

    The coarse space is extended by zero beyond its r_end, so it must be
    nested in the fine space: same degree and variant, coarse
    breakpoints a subset of the fine ones, and coarse r_end itself a
    fine breakpoint.
    """
    fine = fine_mats.mesh
    tol = _ALIGN_RTOL * (fine.r_end - fine.r_b)
    if coarse_mesh.degree != fine.degree:
        raise ValidationError("coarse and fine meshes must share the element degree")
    if coarse_mesh.variant != fine.variant:
        raise ValidationError("coarse and fine meshes must share the variant")
    if abs(coarse_mesh.r_b - fine.r_b) > tol:
        raise ValidationError("coarse and fine meshes must share r_b")
    if coarse_mesh.r_end > fine.r_end + tol:
        raise ValidationError("coarse mesh reaches beyond the fine mesh")
    if not _breakpoints_nested(coarse_mesh.breakpoints, fine.breakpoints, tol):
        raise ValidationError("coarse breakpoints are not nested in the fine mesh")

    x = np.asarray(coeffs, dtype=complex)
    G = fine_mats.gram
    p = fine.degree
    fine_nodes = fine.nodes()[1:-1]
    ref_nodes = lobatto_nodes(p)
    cb = coarse_mesh.breakpoints
    n_coarse_nodes = coarse_mesh.n_elements * p + 1
    E_full = np.zeros((len(fine_nodes), n_coarse_nodes))
    for i, xn in enumerate(fine_nodes):
        if xn > coarse_mesh.r_end + tol:
            continue
        e = min(max(int(np.searchsorted(cb, xn, side="right")) - 1, 0),
                coarse_mesh.n_elements - 1)
        left, right = cb[e], cb[e + 1]
        xi = 2.0 * (xn - left) / (right - left) - 1.0
        vals, _ = _lagrange_table(ref_nodes, np.array([xi]))
        E_full[i, e * p: e * p + p + 1] = vals[:, 0]
    E = E_full[:, 1:-1]

    A = E.conj().T @ G @ E
    b = E.conj().T @ (G @ x)
    y = np.linalg.solve(A, b)
    resid = x - E @ y
    err2 = float(np.real(resid.conj() @ (G @ resid)))
    return float(np.sqrt(max(err2, 0.0)))


def export_triplets(matrix: np.ndarray) -> str:
    """Nonzero entries as 'row col re im' lines for offline cross-checks."""
    lines = []
    for (i, j), v in np.ndenumerate(matrix):
        if v != 0:
            lines.append(f"{i} {j} {v.real:.17g} {v.imag:.17g}")
    return "\n".join(lines) + "\n"
