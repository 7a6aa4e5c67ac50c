"""Config-driven convergence studies and diagnostic sweeps.

A study is described by a TOML file with four tables:

* ``[profile]``  -- the absorption profile (see :mod:`resonalens.profiles`)
* ``[problem]``  -- boundary radius, mode index, element degree, spectral
  window/sector and matching controls
* ``[study]``    -- what to sweep; ``type`` selects one of
  ``truncation``, ``mesh``, ``diagonal``, ``exact``, ``commutator``,
  ``coercivity``, ``verify-annulus``
* ``[exact_map]`` -- reparametrization for the ``exact`` study only
* ``[output]``   -- default output directory

Every sweep point assembles the mode pencil, solves it densely, and
either matches retained frequencies against the closed-form oracle or
evaluates a diagnostic (commutator norm, coercivity certificate).
Results are emitted as ``rows.csv`` (one row per tracked quantity per
sweep point, byte-deterministic: the runtime column is always written
as 0), ``summary.csv`` (one row with the fitted rate), and
``tracked_<i>.dat`` gnuplot traces.  Each study also carries pass/fail
checks with the thresholds the package promises (rates within their
tolerance bands, no missed or spurious resonances, certificates all
passing); ``resonalens run --check`` turns a failed check into exit
code 3.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ValidationError
from .oracle import MAX_MODE, annulus_dirichlet_eigs, hankel_resonances
from .profiles import Profile, make_profile
from .radialfem import _exact_inverse, assemble_mode, build_mesh, refine_mesh
from .scaling import ExactMap
from .spectra import _in_window, fit_rate, match_to_oracle, resonances
from .tcert import (coercivity_certificate, coercivity_symbol,
                    discrete_commutator_norm, smooth_symbol)

__all__ = [
    "STUDY_TYPES",
    "ROWS_HEADER",
    "SUMMARY_HEADER",
    "Plan",
    "StudyRow",
    "CheckItem",
    "StudyReport",
    "load_config",
    "validate_config",
    "load_plan",
    "run_study",
    "emit_report",
]

STUDY_TYPES = ("truncation", "mesh", "diagonal", "exact", "commutator",
               "coercivity", "verify-annulus")

ROWS_HEADER = ("study,n,param_name,param_value,omega_re,omega_im,"
               "oracle_re,oracle_im,error_abs,residual,dofs,runtime_ms")
SUMMARY_HEADER = ("study,n,tracked_re,tracked_im,model,slope,r_squared,"
                  "points,final_error,missed,spurious,multiplicity")

_DENSE_DOF_CAP = 2000  # dense QZ/eigh budget per sweep point

_TOP_KEYS = {"profile", "problem", "study", "exact_map", "output"}
_PROFILE_KEYS = {"kind", "strength", "r_start", "exponent", "r_flat", "verification_only"}
_PROBLEM_KEYS = {"r_b", "n", "degree", "quad_order", "sector", "line_margin",
                 "window", "match_radius", "oracle_count"}
_EXACT_KEYS = {"kind", "r_inf", "beta"}
_OUTPUT_KEYS = {"dir"}
_STUDY_KEYS = {
    "truncation": {"type", "radii", "spacing"},
    "mesh": {"type", "radius", "elements"},
    "diagonal": {"type", "radii", "elements"},
    "exact": {"type", "elements"},
    "commutator": {"type", "radius", "elements", "epsilon", "r_hat1", "r_hat2", "omega"},
    "coercivity": {"type", "radius", "elements", "omegas"},
    "verify-annulus": {"type", "radius", "elements", "count"},
}
_SCATTERING = ("truncation", "mesh", "diagonal", "exact")


# -- plan ---------------------------------------------------------------


@dataclass(eq=False)
class Plan:
    """Validated, normalized study description."""

    profile: Profile
    exact_map: ExactMap | None
    study: str
    problem: dict
    params: dict
    outdir: str | None


@dataclass(frozen=True)
class StudyRow:
    study: str
    n: int
    param_name: str
    param_value: float
    omega: complex
    oracle: complex
    error_abs: float
    residual: float
    dofs: int
    runtime_ms: float  # measured; serialized as 0 for byte-stable output


@dataclass(frozen=True)
class CheckItem:
    name: str
    passed: bool
    detail: str


@dataclass(eq=False)
class StudyReport:
    study: str
    n: int
    rows: list
    tracked: list       # oracle targets, empty for diagnostic studies
    series: dict        # series index -> [(param, error-or-None), ...]
    fit: object | None  # RateFit of the headline series
    summary: dict       # summary.csv fields
    checks: list        # CheckItem

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# -- config loading and validation --------------------------------------


def load_config(path) -> dict:
    """Read a TOML study description."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"invalid TOML in {path}: {exc}") from exc


def _reject_unknown(tbl, allowed, where):
    unknown = sorted(set(tbl) - allowed)
    if unknown:
        raise ValidationError(f"unknown keys in [{where}]: {', '.join(unknown)}")


def _number(x, name) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError(f"{name} must be a number, got {x!r}")
    return float(x)


def _integer(x, name) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValidationError(f"{name} must be an integer, got {x!r}")
    return int(x)


def _number_list(x, name, min_len) -> list:
    if not isinstance(x, list) or len(x) < min_len:
        raise ValidationError(f"{name} must be a list of at least {min_len} numbers")
    return [_number(v, f"{name}[{i}]") for i, v in enumerate(x)]


def _int_list(x, name, min_len) -> list:
    if not isinstance(x, list) or len(x) < min_len:
        raise ValidationError(f"{name} must be a list of at least {min_len} integers")
    return [_integer(v, f"{name}[{i}]") for i, v in enumerate(x)]


def _increasing(seq, name):
    if any(b <= a for a, b in zip(seq, seq[1:])):
        raise ValidationError(f"{name} must be strictly increasing")
    return seq


def _complex_value(x, name) -> complex:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(float(x), 0.0)
    if isinstance(x, list) and len(x) == 2:
        return complex(_number(x[0], f"{name}[0]"), _number(x[1], f"{name}[1]"))
    raise ValidationError(f"{name} must be a number or a [re, im] pair, got {x!r}")


def _parse_profile(tbl) -> Profile:
    if not isinstance(tbl, dict):
        raise ValidationError("[profile] must be a table")
    _reject_unknown(tbl, _PROFILE_KEYS, "profile")
    if "kind" not in tbl:
        raise ValidationError("profile.kind is required")
    kwargs = {}
    for key in ("strength", "r_start", "r_flat"):
        if key in tbl:
            kwargs[key] = _number(tbl[key], f"profile.{key}")
    if "exponent" in tbl:
        kwargs["exponent"] = _integer(tbl["exponent"], "profile.exponent")
    if "verification_only" in tbl:
        if not isinstance(tbl["verification_only"], bool):
            raise ValidationError("profile.verification_only must be a boolean")
        kwargs["verification_only"] = tbl["verification_only"]
    return make_profile(tbl["kind"], **kwargs)


def _parse_problem(tbl) -> dict:
    if not isinstance(tbl, dict):
        raise ValidationError("[problem] must be a table")
    _reject_unknown(tbl, _PROBLEM_KEYS, "problem")
    pr = {"r_b": 1.0, "n": 0, "degree": 2, "quad_order": None, "sector": "lower",
          "line_margin": 0.05, "window": None, "match_radius": None, "oracle_count": None}
    if "r_b" in tbl:
        pr["r_b"] = _number(tbl["r_b"], "problem.r_b")
        if pr["r_b"] <= 0:
            raise ValidationError(f"problem.r_b must be positive, got {pr['r_b']}")
    if "n" in tbl:
        pr["n"] = _integer(tbl["n"], "problem.n")
        if not 0 <= pr["n"] <= MAX_MODE:
            raise ValidationError(f"problem.n must lie in [0, {MAX_MODE}], got {pr['n']}")
    if "degree" in tbl:
        pr["degree"] = _integer(tbl["degree"], "problem.degree")
        if pr["degree"] < 1:
            raise ValidationError(f"problem.degree must be >= 1, got {pr['degree']}")
    if "quad_order" in tbl:
        pr["quad_order"] = _integer(tbl["quad_order"], "problem.quad_order")
    if "sector" in tbl:
        if tbl["sector"] not in ("lower", "upper"):
            raise ValidationError(f"problem.sector must be 'lower' or 'upper', got {tbl['sector']!r}")
        pr["sector"] = tbl["sector"]
    if "line_margin" in tbl:
        pr["line_margin"] = _number(tbl["line_margin"], "problem.line_margin")
        if pr["line_margin"] < 0:
            raise ValidationError("problem.line_margin must be nonnegative")
    if "window" in tbl:
        win = _number_list(tbl["window"], "problem.window", 4)
        if len(win) != 4 or win[0] > win[1] or win[2] > win[3]:
            raise ValidationError(
                "problem.window must be [re_min, re_max, im_min, im_max] with min <= max")
        pr["window"] = tuple(win)
    if "match_radius" in tbl:
        pr["match_radius"] = _number(tbl["match_radius"], "problem.match_radius")
        if pr["match_radius"] <= 0:
            raise ValidationError("problem.match_radius must be positive")
    if "oracle_count" in tbl:
        pr["oracle_count"] = _integer(tbl["oracle_count"], "problem.oracle_count")
        if pr["oracle_count"] < 1:
            raise ValidationError("problem.oracle_count must be >= 1")
    return pr


def _parse_exact_map(tbl) -> ExactMap:
    if not isinstance(tbl, dict):
        raise ValidationError("[exact_map] must be a table")
    _reject_unknown(tbl, _EXACT_KEYS, "exact_map")
    if "kind" not in tbl or "r_inf" not in tbl:
        raise ValidationError("exact_map.kind and exact_map.r_inf are required")
    kwargs = {"kind": tbl["kind"], "r_inf": _number(tbl["r_inf"], "exact_map.r_inf")}
    if "beta" in tbl:
        kwargs["beta"] = _number(tbl["beta"], "exact_map.beta")
    return ExactMap(**kwargs)


def _require(tbl, key):
    if key not in tbl:
        raise ValidationError(f"study.{key} is required")
    return tbl[key]


def _parse_study(stype, tbl, problem, profile, emap) -> dict:
    r_b = problem["r_b"]
    ps = {}
    if stype == "truncation":
        ps["radii"] = _increasing(_number_list(_require(tbl, "radii"), "study.radii", 3),
                                  "study.radii")
        ps["spacing"] = _number(_require(tbl, "spacing"), "study.spacing")
        if ps["spacing"] <= 0:
            raise ValidationError("study.spacing must be positive")
        if ps["radii"][0] <= max(r_b, profile.r_start):
            raise ValidationError("every truncation radius must exceed r_b and the profile onset")
    elif stype == "mesh":
        ps["radius"] = _number(_require(tbl, "radius"), "study.radius")
        ps["elements"] = _increasing(_int_list(_require(tbl, "elements"), "study.elements", 1),
                                     "study.elements")
        if ps["elements"][0] < 1:
            raise ValidationError("study.elements must be positive")
        if ps["radius"] <= max(r_b, profile.r_start):
            raise ValidationError("study.radius must exceed r_b and the profile onset")
    elif stype == "diagonal":
        ps["radii"] = _increasing(_number_list(_require(tbl, "radii"), "study.radii", 2),
                                  "study.radii")
        ps["elements"] = _increasing(_int_list(_require(tbl, "elements"), "study.elements", 2),
                                     "study.elements")
        if len(ps["radii"]) != len(ps["elements"]):
            raise ValidationError("study.radii and study.elements must have equal length")
        if ps["radii"][0] <= max(r_b, profile.r_start):
            raise ValidationError("every diagonal radius must exceed r_b and the profile onset")
        if ps["elements"][0] < 1:
            raise ValidationError("study.elements must be positive")
    elif stype == "exact":
        ps["elements"] = _increasing(_int_list(_require(tbl, "elements"), "study.elements", 2),
                                     "study.elements")
        if ps["elements"][0] < 1:
            raise ValidationError("study.elements must be positive")
        if profile.kind == "power":
            raise ValidationError(
                "the exact study needs a bounded stretch at infinity; "
                "power-kind profiles are rejected")
        if emap.r_inf <= max(r_b, profile.r_start):
            raise ValidationError("exact_map.r_inf must exceed r_b and the profile onset")
    elif stype == "commutator":
        ps["epsilon"] = _number(_require(tbl, "epsilon"), "study.epsilon")
        ps["r_hat1"] = _number(_require(tbl, "r_hat1"), "study.r_hat1")
        ps["r_hat2"] = _number(_require(tbl, "r_hat2"), "study.r_hat2")
        ps["elements"] = _increasing(_int_list(_require(tbl, "elements"), "study.elements", 1),
                                     "study.elements")
        ps["radius"] = _number(tbl["radius"], "study.radius") if "radius" in tbl else ps["r_hat2"]
        ps["omega"] = _complex_value(tbl.get("omega", 1.0), "study.omega")
        if ps["epsilon"] <= 0:
            raise ValidationError("study.epsilon must be positive")
        if not (profile.r_start < ps["r_hat1"] < ps["r_hat2"]):
            raise ValidationError("need profile onset < r_hat1 < r_hat2")
        if ps["r_hat1"] <= r_b:
            raise ValidationError("study.r_hat1 must exceed problem.r_b")
        # the mesh may stop short of r_hat2 (outer joints are then inert),
        # but it must cover the inner blend to see any symbol variation
        if ps["radius"] <= ps["r_hat1"]:
            raise ValidationError("study.radius must exceed r_hat1")
        if ps["omega"] == 0:
            raise ValidationError("study.omega must be nonzero")
    elif stype == "coercivity":
        ps["radius"] = _number(_require(tbl, "radius"), "study.radius")
        ps["elements"] = _integer(_require(tbl, "elements"), "study.elements")
        if ps["elements"] < 1:
            raise ValidationError("study.elements must be a positive integer")
        if ps["radius"] <= max(r_b, profile.r_start):
            raise ValidationError("study.radius must exceed r_b and the profile onset")
        raw = _require(tbl, "omegas")
        if not isinstance(raw, list) or not raw:
            raise ValidationError("study.omegas must be a nonempty list of [re, im] pairs")
        ps["omegas"] = [_complex_value(v, f"study.omegas[{i}]") for i, v in enumerate(raw)]
        if any(w == 0 for w in ps["omegas"]):
            raise ValidationError("study.omegas must be nonzero")
    else:  # verify-annulus
        ps["radius"] = _number(_require(tbl, "radius"), "study.radius")
        if ps["radius"] <= r_b:
            raise ValidationError("study.radius must exceed problem.r_b")
        ps["elements"] = _increasing(_int_list(_require(tbl, "elements"), "study.elements", 3),
                                     "study.elements")
        if ps["elements"][0] < 1:
            raise ValidationError("study.elements must be positive")
        count = tbl.get("count", problem["oracle_count"])
        ps["count"] = 1 if count is None else _integer(count, "study.count")
        if ps["count"] < 1:
            raise ValidationError("study.count must be >= 1")
    return ps


def validate_config(raw: dict) -> Plan:
    """Check every key and value of a parsed config; return the plan.

    Raises ValidationError with an actionable message on the first
    offending entry; unknown sections and keys are rejected outright.
    """
    if not isinstance(raw, dict):
        raise ValidationError("config must be a TOML table")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if "profile" not in raw:
        raise ValidationError("a [profile] section is required")
    if "study" not in raw:
        raise ValidationError("a [study] section is required")
    profile = _parse_profile(raw["profile"])
    study_tbl = raw["study"]
    if not isinstance(study_tbl, dict):
        raise ValidationError("[study] must be a table")
    stype = study_tbl.get("type")
    if stype not in STUDY_TYPES:
        raise ValidationError(f"study.type must be one of {STUDY_TYPES}, got {stype!r}")
    _reject_unknown(study_tbl, _STUDY_KEYS[stype], "study")
    problem = _parse_problem(raw.get("problem", {}))

    if stype == "exact":
        if "exact_map" not in raw:
            raise ValidationError("the exact study requires an [exact_map] section")
        emap = _parse_exact_map(raw["exact_map"])
    else:
        if "exact_map" in raw:
            raise ValidationError("[exact_map] is only used by the exact study")
        emap = None

    if stype == "verify-annulus":
        if profile.scaled:
            raise ValidationError(
                "verify-annulus compares against a self-adjoint oracle; "
                "use the unscaled profile (verification_only = true)")
    else:
        if not profile.scaled:
            raise ValidationError(f"the {stype} study requires a scaled profile")
        if profile.r_start < problem["r_b"] * (1.0 - 1e-12):
            raise ValidationError(
                "the stretch must vanish at the boundary: profile.r_start >= problem.r_b")
    if stype in _SCATTERING and problem["n"] < 1:
        raise ValidationError(
            f"the {stype} study tracks resonances; set problem.n >= 1 (mode 0 has none)")

    params = _parse_study(stype, study_tbl, problem, profile, emap)

    outdir = None
    if "output" in raw:
        out_tbl = raw["output"]
        if not isinstance(out_tbl, dict):
            raise ValidationError("[output] must be a table")
        _reject_unknown(out_tbl, _OUTPUT_KEYS, "output")
        if "dir" in out_tbl:
            if not isinstance(out_tbl["dir"], str) or not out_tbl["dir"]:
                raise ValidationError("output.dir must be a nonempty string")
            outdir = out_tbl["dir"]

    return Plan(profile=profile, exact_map=emap, study=stype,
                problem=problem, params=params, outdir=outdir)


def load_plan(path) -> Plan:
    return validate_config(load_config(path))


# -- running ------------------------------------------------------------


def _parallel(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _check_budget(mesh):
    if mesh.n_dofs > _DENSE_DOF_CAP:
        raise ValidationError(
            f"mesh has {mesh.n_dofs} dofs; the dense solver budget is {_DENSE_DOF_CAP}")


def _check(name, ok, detail) -> CheckItem:
    return CheckItem(name=name, passed=bool(ok), detail=detail)


def _fit_or_none(series, model):
    pts = [(p, e) for p, e in series if e is not None and np.isfinite(e) and e > 0.0]
    if len(pts) < 3:
        return None
    return fit_rate(pts, model)


def _fit_detail(fit, target=None, tol=None):
    if fit is None:
        return "fit unavailable (needs >= 3 positive errors)"
    msg = f"slope={fit.slope:.4g}, r2={fit.r_squared:.4g}"
    if target is not None:
        msg += f", target={target:g}+-{tol:g}"
    return msg


def _strictly_decreasing(series):
    errs = [e for _, e in series]
    if len(errs) < 2 or any(e is None or not np.isfinite(e) for e in errs):
        return False
    return all(b < a for a, b in zip(errs, errs[1:]))


def _last_error(series):
    if not series or series[-1][1] is None:
        return None
    return float(series[-1][1])


def _oracle_targets(plan):
    """Window, tracked oracle list, index of the principal target, match radius."""
    pr = plan.problem
    om = hankel_resonances(pr["n"], pr["r_b"])
    if len(om) == 0:
        raise ValidationError(f"mode {pr['n']} has no resonances to track")
    principal = max(om, key=lambda w: (w.imag, w.real))
    pad = max(0.3, 0.25 * abs(principal))
    window = pr["window"]
    if window is None:
        window = (principal.real - pad, principal.real + pad,
                  principal.imag - pad, principal.imag + pad)
    tracked = sorted((complex(w) for w in om if _in_window(complex(w), window)),
                     key=lambda w: (w.real, w.imag))
    if not tracked:
        raise ValidationError("the window contains no oracle resonances")
    principal_idx = max(range(len(tracked)),
                        key=lambda i: (tracked[i].imag, tracked[i].real))
    radius = pr["match_radius"] if pr["match_radius"] is not None else pad
    return window, tracked, principal_idx, radius


def _scatter_core(plan, jobs, points, param_name):
    """Shared sweep driver: assemble, solve, match, collect rows/series."""
    pr = plan.problem
    n = pr["n"]
    window, tracked, principal_idx, radius = _oracle_targets(plan)

    def solve(item):
        param, mesh = item
        _check_budget(mesh)
        t0 = time.perf_counter()
        mats = assemble_mode(mesh, plan.profile, n)
        spec = resonances(mats, window=window, sector=pr["sector"],
                          line_margin=pr["line_margin"])
        rep = match_to_oracle(spec, tracked, radius)
        ms = (time.perf_counter() - t0) * 1e3
        return param, mats.n_dofs, rep, ms

    rows = []
    series = {i: [] for i in range(len(tracked))}
    missed = spurious = 0
    for param, dofs, rep, ms in _parallel(solve, points, jobs):
        for i, pair in enumerate(rep.pairs):
            omega = pair.omega if pair.omega is not None else complex(float("nan"), float("nan"))
            err = pair.error if pair.error is not None else float("nan")
            res = pair.residual if pair.residual is not None else float("nan")
            rows.append(StudyRow(plan.study, n, param_name, float(param), omega,
                                 tracked[i], err, res, dofs, ms))
            series[i].append((float(param), pair.error))
        missed += rep.missed
        spurious += len(rep.spurious)
    return rows, series, tracked, principal_idx, missed, spurious


def _report(plan, *, rows, series, tracked, target, fit, model,
            missed, spurious, checks, final_error, points):
    summary = {
        "study": plan.study,
        "n": plan.problem["n"],
        "tracked_re": target.real,
        "tracked_im": target.imag,
        "model": model,
        "slope": fit.slope if fit is not None else float("nan"),
        "r_squared": fit.r_squared if fit is not None else float("nan"),
        "points": points,
        "final_error": final_error if final_error is not None else float("nan"),
        "missed": missed,
        "spurious": spurious,
        "multiplicity": len(series),
    }
    return StudyReport(study=plan.study, n=plan.problem["n"], rows=rows,
                       tracked=tracked, series=series, fit=fit,
                       summary=summary, checks=checks)


def _capture_checks(missed, spurious):
    return [
        _check("tracked-captured", missed == 0, f"{missed} missed matches"),
        _check("no-spurious", spurious == 0, f"{spurious} spurious entries in window"),
    ]


def _run_truncation(plan, jobs):
    pr, ps = plan.problem, plan.params
    points = []
    for R in ps["radii"]:
        n_el = max(1, int(np.ceil((R - pr["r_b"]) / ps["spacing"] - 1e-12)))
        mesh = build_mesh(pr["r_b"], R, n_el, pr["degree"], pr["quad_order"],
                          align=plan.profile.kinks())
        points.append((R, mesh))
    rows, series, tracked, pidx, missed, spurious = _scatter_core(plan, jobs, points, "radius")
    prin = series[pidx]
    fit = _fit_or_none(prin, "exponential")
    checks = _capture_checks(missed, spurious) + [
        _check("fit-exponential-decay", fit is not None and fit.slope < 0.0, _fit_detail(fit)),
        _check("fit-quality", fit is not None and fit.r_squared >= 0.9, _fit_detail(fit)),
    ]
    return _report(plan, rows=rows, series=series, tracked=tracked, target=tracked[pidx],
                   fit=fit, model="exponential", missed=missed, spurious=spurious,
                   checks=checks, final_error=_last_error(prin), points=len(points))


def _run_mesh(plan, jobs):
    pr, ps = plan.problem, plan.params
    points = []
    for n_el in ps["elements"]:
        mesh = build_mesh(pr["r_b"], ps["radius"], n_el, pr["degree"], pr["quad_order"],
                          align=plan.profile.kinks())
        points.append((mesh.h_max, mesh))
    rows, series, tracked, pidx, missed, spurious = _scatter_core(plan, jobs, points, "h")
    prin = series[pidx]
    fit = _fit_or_none(prin, "algebraic")
    checks = _capture_checks(missed, spurious)
    if len(points) >= 3:
        target_rate = 2.0 * pr["degree"]
        checks += [
            _check("fit-rate", fit is not None and abs(fit.slope - target_rate) <= 0.6,
                   _fit_detail(fit, target_rate, 0.6)),
            _check("fit-quality", fit is not None and fit.r_squared >= 0.95, _fit_detail(fit)),
        ]
    return _report(plan, rows=rows, series=series, tracked=tracked, target=tracked[pidx],
                   fit=fit, model="algebraic", missed=missed, spurious=spurious,
                   checks=checks, final_error=_last_error(prin), points=len(points))


def _run_diagonal(plan, jobs):
    pr, ps = plan.problem, plan.params
    points = []
    for R, n_el in zip(ps["radii"], ps["elements"]):
        mesh = build_mesh(pr["r_b"], R, n_el, pr["degree"], pr["quad_order"],
                          align=plan.profile.kinks())
        points.append((R, mesh))
    rows, series, tracked, pidx, missed, spurious = _scatter_core(plan, jobs, points, "radius")
    prin = series[pidx]
    final = _last_error(prin)
    checks = _capture_checks(missed, spurious) + [
        _check("errors-decreasing", _strictly_decreasing(prin),
               "tracked error must drop at every diagonal step"),
        _check("final-error", final is not None and final <= 1e-3,
               f"final error {float('nan') if final is None else final:.3g} (limit 1e-3)"),
    ]
    return _report(plan, rows=rows, series=series, tracked=tracked, target=tracked[pidx],
                   fit=None, model="none", missed=missed, spurious=spurious,
                   checks=checks, final_error=final, points=len(points))


def _exact_align(plan):
    pts = []
    for k in plan.profile.kinks():
        if k <= plan.profile.r_start:
            pts.append(k)
        else:
            inv = _exact_inverse(plan.exact_map, plan.profile.r_start, k)
            if inv is not None:
                pts.append(inv)
    return tuple(pts)


def _run_exact(plan, jobs):
    pr, ps = plan.problem, plan.params
    emap = plan.exact_map
    align = _exact_align(plan)
    points = []
    for n_el in ps["elements"]:
        mesh = build_mesh(pr["r_b"], emap.r_inf, n_el, pr["degree"], pr["quad_order"],
                          variant="exact", exact_map=emap, align=align)
        points.append((mesh.h_max, mesh))
    rows, series, tracked, pidx, missed, spurious = _scatter_core(plan, jobs, points, "h")
    prin = series[pidx]
    fit = _fit_or_none(prin, "algebraic")
    final = _last_error(prin)
    checks = _capture_checks(missed, spurious) + [
        _check("errors-decreasing", _strictly_decreasing(prin),
               "tracked error must drop at every refinement"),
        _check("final-error", final is not None and final <= 1e-2,
               f"final error {float('nan') if final is None else final:.3g} (limit 1e-2)"),
    ]
    return _report(plan, rows=rows, series=series, tracked=tracked, target=tracked[pidx],
                   fit=fit, model="algebraic", missed=missed, spurious=spurious,
                   checks=checks, final_error=final, points=len(points))


def _run_commutator(plan, jobs):
    pr, ps = plan.problem, plan.params
    profile = plan.profile
    sym = coercivity_symbol(profile, ps["omega"])
    sym_eps = smooth_symbol(sym, ps["epsilon"], ps["r_hat1"], ps["r_hat2"])
    # joints beyond the truncation radius impose no mesh constraint
    align = tuple(x for x in tuple(profile.kinks()) + (ps["r_hat1"], ps["r_hat2"])
                  if pr["r_b"] < x < ps["radius"])

    def solve(n_el):
        mesh = build_mesh(pr["r_b"], ps["radius"], n_el, pr["degree"], pr["quad_order"],
                          align=align)
        _check_budget(mesh)
        t0 = time.perf_counter()
        norm = discrete_commutator_norm(mesh, profile, sym_eps, pr["n"])
        ms = (time.perf_counter() - t0) * 1e3
        return mesh.h_max, norm, mesh.n_dofs, ms

    rows = []
    series = {0: []}
    for h, norm, dofs, ms in _parallel(solve, ps["elements"], jobs):
        rows.append(StudyRow(plan.study, pr["n"], "h", float(h), 0j, 0j,
                             float(norm), 0.0, dofs, ms))
        series[0].append((float(h), float(norm)))
    norms = [e for _, e in series[0]]
    constant = sym_eps.poly is None
    fit = None if constant else _fit_or_none(series[0], "algebraic")
    if constant:
        checks = [_check("constant-commutator", max(norms) <= 1e-14,
                         f"max norm {max(norms):.3g} (limit 1e-14)")]
        model = "none"
    else:
        checks = [
            _check("norms-decreasing", _strictly_decreasing(series[0]),
                   "commutator norm must drop at every refinement"),
            _check("fit-rate", fit is not None and abs(fit.slope - 1.0) <= 0.3,
                   _fit_detail(fit, 1.0, 0.3)),
        ]
        model = "algebraic"
    return _report(plan, rows=rows, series=series, tracked=[], target=0j, fit=fit,
                   model=model, missed=0, spurious=0, checks=checks,
                   final_error=norms[-1], points=len(norms))


def _run_coercivity(plan, jobs):
    pr, ps = plan.problem, plan.params
    base = build_mesh(pr["r_b"], ps["radius"], ps["elements"], pr["degree"],
                      pr["quad_order"], align=plan.profile.kinks())
    fine = refine_mesh(base)
    for mesh in (base, fine):
        _check_budget(mesh)
    items = [(i, mesh) for i in range(len(ps["omegas"])) for mesh in (base, fine)]

    def solve(item):
        i, mesh = item
        t0 = time.perf_counter()
        cert = coercivity_certificate(mesh, plan.profile, pr["n"], ps["omegas"][i])
        ms = (time.perf_counter() - t0) * 1e3
        return i, mesh, cert, ms

    rows = []
    series = {i: [] for i in range(len(ps["omegas"]))}
    all_passed = True
    max_defect = 0.0
    for i, mesh, cert, ms in _parallel(solve, items, jobs):
        defect = max(cert.bound - cert.min_eig, 0.0)
        rows.append(StudyRow(plan.study, pr["n"], "elements", float(mesh.n_elements),
                             cert.omega, 0j, defect, cert.min_eig, mesh.n_dofs, ms))
        series[i].append((float(mesh.n_elements), defect))
        all_passed = all_passed and cert.passed
        max_defect = max(max_defect, defect)
    checks = [_check("all-certified", all_passed,
                     f"max defect {max_defect:.3g} over base and refined meshes")]
    return _report(plan, rows=rows, series=series, tracked=[], target=0j, fit=None,
                   model="none", missed=0, spurious=0, checks=checks,
                   final_error=max_defect, points=2)


def _run_annulus(plan, jobs):
    pr, ps = plan.problem, plan.params
    count = ps["count"]
    oracle = annulus_dirichlet_eigs(pr["r_b"], ps["radius"], pr["n"], count + 1)
    gap = float(np.min(np.diff(oracle)))
    radius = pr["match_radius"] if pr["match_radius"] is not None else 0.45 * gap
    targets = [complex(w) for w in oracle[:count]]

    def solve(n_el):
        mesh = build_mesh(pr["r_b"], ps["radius"], n_el, pr["degree"], pr["quad_order"])
        _check_budget(mesh)
        t0 = time.perf_counter()
        mats = assemble_mode(mesh, plan.profile, pr["n"])
        spec = resonances(mats, window=None, sector=None)
        rep = match_to_oracle(spec, targets, radius)
        ms = (time.perf_counter() - t0) * 1e3
        return mesh.h_max, mats.n_dofs, rep, ms

    rows = []
    series = {i: [] for i in range(count)}
    per_h = []
    missed = 0
    for h, dofs, rep, ms in _parallel(solve, ps["elements"], jobs):
        worst = 0.0
        for i, pair in enumerate(rep.pairs):
            omega = pair.omega if pair.omega is not None else complex(float("nan"), float("nan"))
            err = pair.error if pair.error is not None else float("nan")
            res = pair.residual if pair.residual is not None else float("nan")
            rows.append(StudyRow(plan.study, pr["n"], "h", float(h), omega, targets[i],
                                 err, res, dofs, ms))
            series[i].append((float(h), pair.error))
            worst = max(worst, err) if np.isfinite(err) else float("nan")
        per_h.append((float(h), worst if np.isfinite(worst) else None))
        missed += rep.missed
    fit = _fit_or_none(per_h, "algebraic")
    final = _last_error(per_h)
    target_rate = 2.0 * pr["degree"]
    checks = [
        _check("tracked-captured", missed == 0, f"{missed} missed matches"),
        _check("fit-rate", fit is not None and abs(fit.slope - target_rate) <= 0.5,
               _fit_detail(fit, target_rate, 0.5)),
        _check("fit-quality", fit is not None and fit.r_squared >= 0.98, _fit_detail(fit)),
        _check("final-error", final is not None and final <= 1e-6,
               f"final error {float('nan') if final is None else final:.3g} (limit 1e-6)"),
    ]
    return _report(plan, rows=rows, series=series, tracked=targets, target=targets[0],
                   fit=fit, model="algebraic", missed=missed, spurious=0,
                   checks=checks, final_error=final, points=len(ps["elements"]))


_RUNNERS = {
    "truncation": _run_truncation,
    "mesh": _run_mesh,
    "diagonal": _run_diagonal,
    "exact": _run_exact,
    "commutator": _run_commutator,
    "coercivity": _run_coercivity,
    "verify-annulus": _run_annulus,
}


def run_study(plan: Plan, jobs: int = 1) -> StudyReport:
    """Execute the planned sweep; returns rows, fits, and checks.

    ``jobs > 1`` distributes sweep points over a thread pool; results
    are collected in sweep order, so the emitted files are identical to
    a serial run.
    """
    if int(jobs) != jobs or jobs < 1:
        raise ValidationError(f"jobs must be a positive integer, got {jobs}")
    return _RUNNERS[plan.study](plan, int(jobs))


# -- output -------------------------------------------------------------


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _row_line(row: StudyRow) -> str:
    return ",".join([
        row.study, str(row.n), row.param_name, _fmt(row.param_value),
        _fmt(row.omega.real), _fmt(row.omega.imag),
        _fmt(row.oracle.real), _fmt(row.oracle.imag),
        _fmt(row.error_abs), _fmt(row.residual), str(row.dofs),
        _fmt(0.0),  # wall time varies run to run; the file must not
    ])


def emit_report(report: StudyReport, outdir) -> list:
    """Write rows.csv, summary.csv, and tracked_<i>.dat under outdir."""
    os.makedirs(outdir, exist_ok=True)
    paths = []

    rows_path = os.path.join(outdir, "rows.csv")
    with open(rows_path, "w", newline="\n") as f:
        f.write(ROWS_HEADER + "\n")
        for row in report.rows:
            f.write(_row_line(row) + "\n")
    paths.append(rows_path)

    s = report.summary
    summary_path = os.path.join(outdir, "summary.csv")
    with open(summary_path, "w", newline="\n") as f:
        f.write(SUMMARY_HEADER + "\n")
        f.write(",".join([
            s["study"], str(s["n"]), _fmt(s["tracked_re"]), _fmt(s["tracked_im"]),
            s["model"], _fmt(s["slope"]), _fmt(s["r_squared"]), str(s["points"]),
            _fmt(s["final_error"]), str(s["missed"]), str(s["spurious"]),
            str(s["multiplicity"]),
        ]) + "\n")
    paths.append(summary_path)

    for i in sorted(report.series):
        pts = [(p, e) for p, e in report.series[i]
               if e is not None and np.isfinite(e)]
        if not pts:
            continue
        dat_path = os.path.join(outdir, f"tracked_{i}.dat")
        with open(dat_path, "w", newline="\n") as f:
            f.write("# param error\n")
            for p, e in pts:
                f.write(f"{_fmt(p)} {_fmt(e)}\n")
        paths.append(dat_path)
    return paths
