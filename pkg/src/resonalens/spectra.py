"""Resonance extraction from the assembled pencil.

The pencil S x = lambda M x is linear in lambda = omega^2; each finite
eigenvalue yields the frequency pair +-sqrt(lambda), of which exactly
one lies in the requested sector (the side of the essential line
{t / far_phase} where the stretch reveals resonances).  Discretization
scatters spurious eigenvalues along that line, so retained entries must
also keep an angular margin from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .radialfem import ModeMatrices
from .scaling import far_phase

__all__ = [
    "EigenSolution",
    "solve_gevp",
    "SpectrumEntry",
    "SpectrumResult",
    "resonances",
    "MatchedPair",
    "MatchReport",
    "match_to_oracle",
    "RateFit",
    "fit_rate",
]

DEFAULT_LINE_MARGIN = 0.05  # radians of arg(i*omega*far_phase) away from +-pi/2


@dataclass(eq=False)
class EigenSolution:
    values: np.ndarray
    vectors: np.ndarray      # columns, 2-normalized
    residuals: np.ndarray    # ||(S - lambda M) x|| / (||S||_F + |lambda| ||M||_F)


def solve_gevp(stiffness: np.ndarray, mass: np.ndarray) -> EigenSolution:
    """All finite generalized eigenpairs of (S, M) by the QZ algorithm."""
    S = np.asarray(stiffness, dtype=complex)
    M = np.asarray(mass, dtype=complex)
    if S.shape != M.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("stiffness and mass must be square matrices of equal shape")
    try:
        lam, vecs = scipy.linalg.eig(S, M)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"generalized eigensolve failed: {exc}") from exc
    keep = np.isfinite(lam)
    lam, vecs = lam[keep], vecs[:, keep]
    norm_s = np.linalg.norm(S)
    norm_m = np.linalg.norm(M)
    res = np.empty(len(lam))
    for i, lv in enumerate(lam):
        x = vecs[:, i]
        nx = np.linalg.norm(x)
        res[i] = np.linalg.norm(S @ x - lv * (M @ x)) / ((norm_s + abs(lv) * norm_m) * nx)
    return EigenSolution(values=lam, vectors=vecs, residuals=res)


@dataclass
class SpectrumEntry:
    omega: complex
    lam: complex
    vector: np.ndarray   # Gram-normalized
    residual: float
    sector: str          # "lower", "upper", or "essential-adjacent"


@dataclass
class SpectrumResult:
    entries: list
    sector: str | None
    window: tuple | None
    line_margin: float

    def omegas(self) -> np.ndarray:
        return np.array([e.omega for e in self.entries], dtype=complex)


def _line_distance(omega: complex, d0: complex) -> float:
    """Angular distance of arg(i*omega*d0) from +-pi/2 (wrap-aware)."""
    phase = np.angle(1j * omega * d0)
    d1 = abs((phase - np.pi / 2 + np.pi) % (2 * np.pi) - np.pi)
    d2 = abs((phase + np.pi / 2 + np.pi) % (2 * np.pi) - np.pi)
    return min(d1, d2)


def _in_window(omega: complex, window) -> bool:
    re_min, re_max, im_min, im_max = window
    return re_min <= omega.real <= re_max and im_min <= omega.imag <= im_max


def resonances(mats: ModeMatrices, window=None, sector: str | None = "lower",
               line_margin: float = DEFAULT_LINE_MARGIN,
               residual_tol: float = 1e-8) -> SpectrumResult:
    """Solve the pencil and retain frequencies per sector/window/margin.

    For a scaled profile each eigenvalue contributes the one square root
    on the requested side of the essential line, kept only if its
    angular distance from the line is at least ``line_margin`` and it
    lies in ``window`` (re_min, re_max, im_min, im_max) when given.

    Unscaled (verification) profiles have no essential direction: the
    principal root is kept, tagged "essential-adjacent", and only the
    window applies.
    """
    if sector not in ("lower", "upper", None):
        raise ValidationError(f"sector must be 'lower', 'upper', or None, got {sector!r}")
    if window is not None:
        window = tuple(float(v) for v in window)
        if len(window) != 4 or window[0] > window[1] or window[2] > window[3]:
            raise ValidationError(f"window must be (re_min, re_max, im_min, im_max), got {window}")
    sol = solve_gevp(mats.stiffness, mats.mass)
    G = mats.gram
    scaled = mats.profile.scaled
    if scaled and sector is None:
        raise ValidationError("scaled spectra need an explicit sector")
    d0 = far_phase(mats.profile) if scaled else None

    entries = []
    for lam, x, res in zip(sol.values, sol.vectors.T, sol.residuals):
        if res > residual_tol:
            continue
        root = complex(np.sqrt(lam))
        if scaled:
            picked = None
            for omega in (root, -root):
                side = np.real(1j * omega * d0)
                if (sector == "lower" and side < 0.0) or (sector == "upper" and side > 0.0):
                    picked = omega
                    break
            if picked is None:
                continue
            if _line_distance(picked, d0) < line_margin:
                continue
            tag = sector
            omega = picked
        else:
            omega = root if root.real >= 0 else -root
            tag = "essential-adjacent"
        if window is not None and not _in_window(omega, window):
            continue
        gnorm = float(np.sqrt(np.real(x.conj() @ (G @ x))))
        entries.append(SpectrumEntry(omega=omega, lam=complex(lam), vector=x / gnorm,
                                     residual=float(res), sector=tag))
    entries.sort(key=lambda e: (e.omega.real, e.omega.imag))
    return SpectrumResult(entries=entries, sector=sector, window=window,
                          line_margin=line_margin)


@dataclass
class MatchedPair:
    oracle: complex
    omega: complex | None     # None = missed
    error: float | None
    residual: float | None


@dataclass
class MatchReport:
    pairs: list
    spurious: list            # SpectrumEntry objects left unmatched

    @property
    def missed(self) -> int:
        return sum(1 for p in self.pairs if p.omega is None)

    def errors(self) -> list:
        return [p.error for p in self.pairs if p.error is not None]


def match_to_oracle(result: SpectrumResult, oracle, radius: float) -> MatchReport:
    """Greedy nearest matching of retained frequencies to oracle values.

    Globally smallest distances are paired first; each side is consumed
    at most once; pairs beyond ``radius`` are not formed.  Unmatched
    oracle values are reported as missed, unmatched computed entries as
    spurious candidates.
    """
    if not (radius > 0.0):
        raise ValidationError(f"match radius must be positive, got {radius}")
    oracle = list(np.atleast_1d(np.asarray(oracle, dtype=complex)))
    entries = list(result.entries)
    dists = []
    for i, w_star in enumerate(oracle):
        for j, entry in enumerate(entries):
            d = abs(entry.omega - w_star)
            if d <= radius:
                dists.append((d, i, j))
    dists.sort(key=lambda t: (t[0], t[1], t[2]))
    used_o, used_c = set(), set()
    assignment = {}
    for d, i, j in dists:
        if i in used_o or j in used_c:
            continue
        assignment[i] = j
        used_o.add(i)
        used_c.add(j)
    pairs = []
    for i, w_star in enumerate(oracle):
        if i in assignment:
            e = entries[assignment[i]]
            pairs.append(MatchedPair(oracle=w_star, omega=e.omega,
                                     error=abs(e.omega - w_star), residual=e.residual))
        else:
            pairs.append(MatchedPair(oracle=w_star, omega=None, error=None, residual=None))
    spurious = [e for j, e in enumerate(entries) if j not in used_c]
    return MatchReport(pairs=pairs, spurious=spurious)


@dataclass(frozen=True)
class RateFit:
    """Least-squares convergence fit on log-transformed data.

    algebraic:   log err = intercept + slope * log param
    exponential: log err = intercept + slope * param

    Either way ``slope`` is the raw regression coefficient, so decaying
    data gives a positive slope against a shrinking algebraic parameter
    (err ~ C h^s) and a negative slope against a growing exponential
    parameter (err ~ C e^{slope * R}).
    """

    model: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(points, model: str) -> RateFit:
    """Fit a convergence law to (parameter, error) pairs."""
    if model not in ("algebraic", "exponential"):
        raise ValidationError(f"model must be 'algebraic' or 'exponential', got {model!r}")
    pts = [(float(p), float(e)) for p, e in points]
    if len(pts) < 3:
        raise ValidationError(f"rate fits need at least 3 points, got {len(pts)}")
    params = np.array([p for p, _ in pts])
    errs = np.array([e for _, e in pts])
    if np.any(errs <= 0.0):
        raise ValidationError("rate fits need strictly positive errors")
    if model == "algebraic" and np.any(params <= 0.0):
        raise ValidationError("algebraic fits need strictly positive parameters")
    x = np.log(params) if model == "algebraic" else params
    y = np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = intercept + slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-28 else (1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0)
    return RateFit(model=model, slope=float(slope), intercept=float(intercept),
                   r_squared=float(r2), n_points=len(pts))
