"""Numerical auditor for the adiabatic approximation.

Evaluates sufficiency conditions for a system to stay in an instantaneous
eigenstate, the rigorous infidelity bound that follows from them, and the
exact dynamics against which the bound is checked.
"""

from .criteria import (ConstantCaseSolution, CriterionReport, ErrorBound, ScalingScan,
                       admissible_time, audit, check_integral_bounds, condition_A, condition_B,
                       condition_B1, condition_C, constant_case_amplitudes, constant_case_solve,
                       error_bound, rescaling_scan, report_to_csv, report_to_json, strong_forms)
from .dynamics import (BoundVerdict, EvolutionResult, GeometricPhaseReport, evolution_to_csv,
                       evolve_coefficients, evolve_state, geometric_phase_spin,
                       integral_form_residual, propagator, spin_berry_phase, verify_bound)
from .errors import (AccuracyError, AuditError, ConditioningError, DegeneracyError, FormatError,
                     NumericalConsistencyError, ParameterError, PreconditionError,
                     ResolutionError)
from .hamiltonians import (HamiltonianModel, MatrixSampleTable, SpinHalfParams, TimeGrid,
                           build_constant, build_counterexample_b, build_smooth_random,
                           build_spin_half, load_sample_table, rescale, write_sample_table)
from .spectral import (SpectralFlow, couplings_finite_difference, couplings_hellmann_feynman,
                       detect_constant, eigen_flow, flow_to_csv)

__all__ = [
    "ConstantCaseSolution",
    "CriterionReport",
    "ErrorBound",
    "ScalingScan",
    "admissible_time",
    "audit",
    "check_integral_bounds",
    "condition_A",
    "condition_B",
    "condition_B1",
    "condition_C",
    "constant_case_amplitudes",
    "constant_case_solve",
    "error_bound",
    "rescaling_scan",
    "report_to_csv",
    "report_to_json",
    "strong_forms",
    "BoundVerdict",
    "EvolutionResult",
    "GeometricPhaseReport",
    "evolution_to_csv",
    "evolve_coefficients",
    "evolve_state",
    "geometric_phase_spin",
    "integral_form_residual",
    "propagator",
    "spin_berry_phase",
    "verify_bound",
    "AccuracyError",
    "AuditError",
    "ConditioningError",
    "DegeneracyError",
    "FormatError",
    "NumericalConsistencyError",
    "ParameterError",
    "PreconditionError",
    "ResolutionError",
    "HamiltonianModel",
    "MatrixSampleTable",
    "SpinHalfParams",
    "TimeGrid",
    "build_constant",
    "build_counterexample_b",
    "build_smooth_random",
    "build_spin_half",
    "load_sample_table",
    "rescale",
    "write_sample_table",
    "SpectralFlow",
    "couplings_finite_difference",
    "couplings_hellmann_feynman",
    "detect_constant",
    "eigen_flow",
    "flow_to_csv",
]

__version__ = "0.1.0"
