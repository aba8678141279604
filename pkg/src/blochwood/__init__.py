"""Bi-periodic dielectric layer scattering with transparent boundaries.

Solves time-harmonic Maxwell cell problems over the Brillouin cell with
Fourier-multiplier transparent boundaries, keeps the solves stable through
Wood-anomaly cutoffs by a low-rank update, and synthesises non-periodic strip
solutions (optionally with a local permittivity defect) by cell quadrature.
"""

from .bloch import (AlphaQuadrature, CellIndexedField, bloch_forward, bloch_inverse,
                    build_alpha_quadrature, graded_interval_rule)
from .cell import (CellSolution, Discretization, RankUpdate, RegularOperator,
                   assemble_regular, coercivity_check, divergence_residual,
                   energy_identity_check, load_from_profiles, solve_direct, solve_smw)
from .dtn import (DtnMultipliers, TraceCoefficients, continuous_multipliers, d_matrix,
                  n_apply_regular, singular_functional, t_apply)
from .media import (DefectPerturbation, MediumSamples, PeriodicMedium, fourier_coeffs,
                    validate_assumptions)
from .modes import (CutoffClassification, ModeSet, QuasiPeriodicity, WaveParameters,
                    beta, cutoff_constant, singular_set)
from .strip import (SourceSpec, StripSolution, extend_field, solve_periodic,
                    solve_perturbed, weighted_norm)

__version__ = "0.1.0"

__all__ = [
    "AlphaQuadrature", "CellIndexedField", "CellSolution", "CutoffClassification",
    "DefectPerturbation", "Discretization", "DtnMultipliers", "MediumSamples",
    "ModeSet", "PeriodicMedium", "QuasiPeriodicity", "RankUpdate", "RegularOperator",
    "SourceSpec", "StripSolution", "TraceCoefficients", "WaveParameters",
    "assemble_regular", "beta", "bloch_forward", "bloch_inverse",
    "build_alpha_quadrature", "coercivity_check", "continuous_multipliers",
    "cutoff_constant", "d_matrix", "divergence_residual", "energy_identity_check",
    "extend_field", "fourier_coeffs", "graded_interval_rule", "load_from_profiles",
    "n_apply_regular", "singular_functional", "singular_set", "solve_direct",
    "solve_periodic", "solve_perturbed", "solve_smw", "t_apply",
    "validate_assumptions", "weighted_norm",
]
