"""Resonance computation for the scalar wave problem exterior to a sphere.

The package bends the radial coordinate into the complex plane with an
absorption profile, assembles per-mode finite element pencils on either
a truncated or an exactly mapped unbounded domain, extracts resonances
by dense eigensolves, and backs the whole construction with closed-form
oracles, coercivity certificates, and commutator diagnostics.
"""

from .errors import (ConstructionError, NumericalError, ResonalensError,
                     ValidationError)
from .oracle import annulus_dirichlet_eigs, hankel_polynomial, hankel_resonances
from .profiles import (AssumptionReport, Profile, chi1, chi2, chi2_slope,
                       make_profile, validate_assumptions)
from .radialfem import (ModeMatrices, RadialMesh, assemble_certificate_form,
                        assemble_mode, best_approximation_error, build_mesh,
                        export_triplets, lobatto_nodes, refine_mesh, tail_norm)
from .scaling import (ExactMap, ExactPoint, ScalingPoint, exact_map_at,
                      far_phase, phase_skew_bound, scaling_at)
from .spectra import (EigenSolution, MatchReport, RateFit, SpectrumResult,
                      fit_rate, match_to_oracle, resonances, solve_gevp)
from .studies import (Plan, StudyReport, emit_report, load_config, load_plan,
                      run_study, validate_config)
from .tcert import (CoercivityCertificate, SmoothedSymbol, Symbol,
                    coercivity_certificate, coercivity_symbol,
                    discrete_commutator_norm, smooth_symbol)

__version__ = "0.1.0"

__all__ = [
    "ResonalensError", "ValidationError", "NumericalError", "ConstructionError",
    "chi1", "chi2", "chi2_slope", "Profile", "make_profile",
    "AssumptionReport", "validate_assumptions",
    "ScalingPoint", "scaling_at", "far_phase", "phase_skew_bound",
    "ExactMap", "ExactPoint", "exact_map_at",
    "hankel_polynomial", "hankel_resonances", "annulus_dirichlet_eigs",
    "lobatto_nodes", "RadialMesh", "build_mesh", "refine_mesh",
    "ModeMatrices", "assemble_mode", "assemble_certificate_form",
    "tail_norm", "best_approximation_error", "export_triplets",
    "EigenSolution", "solve_gevp", "SpectrumResult", "resonances",
    "MatchReport", "match_to_oracle", "RateFit", "fit_rate",
    "Symbol", "coercivity_symbol", "SmoothedSymbol", "smooth_symbol",
    "discrete_commutator_norm", "CoercivityCertificate", "coercivity_certificate",
    "Plan", "StudyReport", "load_config", "validate_config", "load_plan",
    "run_study", "emit_report",
    "__version__",
]
