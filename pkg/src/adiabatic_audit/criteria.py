"""
Sufficiency conditions for the adiabatic approximation.

For an initial level ``n`` and every other level ``m`` let
``r_nm(t) = g_nm(t) / omega_nm(t)`` with ``g_nm = <E_n|dE_m/dt>`` and
``omega_nm = E_n - E_m``. The audited quantities are

* (A)  ``|r_nm(t)|``,
* (B)  ``int_0^t |dr_nm/dt'| dt'``,
* (C)  ``int_0^t |r_nm| |g_ml| dt'`` for every ``l != m``,

their pointwise-maximum forms (b), (c), the monotonic-gap form (B1), and the
infidelity bound ``1 - |c_n(t)| <= sum_m |r_nm(t)| + sum_m B_m(t) + sum_ml C_ml(t)``.
"""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy import ndarray
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .errors import (ConditioningError, DegeneracyError, NumericalConsistencyError,
                     ParameterError, PreconditionError, ResolutionError)
from .hamiltonians import HamiltonianModel, TimeGrid, rescale
from .spectral import CONSTANT_TOL, SpectralFlow, detect_constant, eigen_flow

__all__ = [
    "DEFAULT_EPSILON",
    "CriterionReport",
    "ConstantCaseSolution",
    "ErrorBound",
    "ScalingScan",
    "condition_A",
    "condition_B",
    "condition_C",
    "strong_forms",
    "condition_B1",
    "error_bound",
    "admissible_time",
    "audit",
    "constant_case_solve",
    "constant_case_amplitudes",
    "check_integral_bounds",
    "rescaling_scan",
    "report_to_json",
    "report_to_csv",
]

DEFAULT_EPSILON = 0.1
CONDITIONS = ("A", "B", "C")


def _check_n(flow: SpectralFlow, n: int) -> None:
    if not 0 <= n < flow.dimension:
        raise ParameterError(f"level index n = {n} out of range for dimension {flow.dimension}")


def _others(flow: SpectralFlow, n: int) -> list:
    return [m for m in range(flow.dimension) if m != n]


def _pairs(flow: SpectralFlow, n: int) -> list:
    return [(m, l) for m in _others(flow, n) for l in range(flow.dimension) if l != m]


def _ratio(flow: SpectralFlow, n: int) -> ndarray:
    """``r_nm(t_k)`` for ``m != n``, shape (K, N-1)."""
    others = _others(flow, n)
    gaps = flow.energies[:, [n]] - flow.energies[:, others]
    smallest = float(np.min(np.abs(gaps)))
    if smallest == 0.0:
        k = int(np.argmin(np.min(np.abs(gaps), axis=1)))
        raise DegeneracyError(f"level {n} is degenerate at t = {float(flow.times[k])!r}",
                              time=float(flow.times[k]))
    return flow.couplings[:, n, others] / gaps


def _derivative(values: ndarray, h: float) -> ndarray:
    if len(values) < 3:
        raise ResolutionError("at least three grid points are needed for derivatives")
    return np.gradient(values, h, axis=0, edge_order=2)


def condition_A(flow: SpectralFlow, n: int) -> Tuple[ndarray, float]:
    """``|g_nm / omega_nm|`` per channel ``m != n`` and grid point, and its maximum.

    Returns
    -------
    values:
        Shape (N-1, K), rows ordered by ``m``.
    maximum:
        Largest entry of ``values``.
    """
    _check_n(flow, n)
    values = np.abs(_ratio(flow, n)).T
    return values, float(values.max())


def condition_B(flow: SpectralFlow, n: int) -> ndarray:
    """Cumulative ``int_0^t |(g_nm / omega_nm)'| dt'`` per channel, shape (N-1, K).

    The derivative uses central differences (second-order one-sided at the
    ends) and the integral the trapezoidal rule.
    """
    _check_n(flow, n)
    rate = np.abs(_derivative(_ratio(flow, n), flow.grid.step))
    return cumulative_trapezoid(rate, flow.times, axis=0, initial=0.0).T


def condition_C(flow: SpectralFlow, n: int) -> Tuple[list, ndarray, ndarray]:
    """Cumulative ``int_0^t |g_nm / omega_nm| |g_ml| dt'``.

    Returns
    -------
    pairs:
        The ``(m, l)`` channels, ``m != n`` and ``l != m``.
    per_pair:
        Shape (P, K), one curve per pair.
    per_m:
        Shape (N-1, K), the sum over ``l`` for each ``m``.
    """
    _check_n(flow, n)
    others = _others(flow, n)
    r = np.abs(_ratio(flow, n))
    pairs = _pairs(flow, n)
    integrand = np.stack(
        [r[:, others.index(m)] * np.abs(flow.couplings[:, m, l]) for m, l in pairs], axis=1)
    per_pair = cumulative_trapezoid(integrand, flow.times, axis=0, initial=0.0).T
    per_m = np.stack([sum(per_pair[i] for i, (mm, _) in enumerate(pairs) if mm == m)
                      for m in others])
    return pairs, per_pair, per_m


def strong_forms(flow: SpectralFlow, n: int, tau: Optional[float] = None) -> Tuple[ndarray, ndarray]:
    """Pointwise-maximum forms of (B) and (C).

    ``b_m = max|(g_nm/omega_nm)'| tau`` and
    ``c_ml = max|g_nm/omega_nm| max|g_ml| tau``; maxima over the grid
    restricted to ``[0, tau]`` (default: the whole grid).
    """
    _check_n(flow, n)
    t = flow.times
    tau = t[-1] if tau is None else float(tau)
    upto = t <= tau * (1 + 1e-12)
    r = _ratio(flow, n)
    rate = np.abs(_derivative(r, flow.grid.step))[upto]
    b = rate.max(axis=0) * tau
    others = _others(flow, n)
    amax = np.abs(r[upto]).max(axis=0)
    c = np.array([amax[others.index(m)] * np.abs(flow.couplings[upto, m, l]).max() * tau
                  for m, l in _pairs(flow, n)])
    return b, c


def _monotonic(values: ndarray) -> bool:
    steps = np.diff(values)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(values))))
    return bool(np.all(steps >= -tol) or np.all(steps <= tol))


def condition_B1(flow: SpectralFlow, n: int, tau: Optional[float] = None):
    """Monotonic-gap form ``max|g_nm' / omega_nm| tau`` of condition (B).

    Returns ``(values, monotonic, log_terms)``, one entry per channel
    ``m != n``. ``values[i]`` is NaN where ``omega_nm`` is not monotonic on
    the grid, because the form is then not applicable.
    ``log_terms[i] = |ln(omega_nm(tau) / omega_nm(0))|``.
    """
    _check_n(flow, n)
    t = flow.times
    tau = t[-1] if tau is None else float(tau)
    upto = t <= tau * (1 + 1e-12)
    others = _others(flow, n)
    gaps = flow.energies[:, [n]] - flow.energies[:, others]
    dg = _derivative(flow.couplings[:, n, others], flow.grid.step)
    values = np.max(np.abs(dg / gaps)[upto], axis=0) * tau
    flags = np.array([_monotonic(gaps[upto, i]) for i in range(len(others))])
    last = int(np.flatnonzero(upto)[-1])
    logs = np.abs(np.log(gaps[last] / gaps[0]))
    return np.where(flags, values, np.nan), flags, logs


@dataclass(frozen=True)
class ErrorBound:
    """Right-hand side of the infidelity bound, term by term.

    Attributes
    ----------
    times:
        Grid times.
    boundary:
        ``sum_m |g_nm / omega_nm|(t)``.
    drift:
        ``sum_m int_0^t |(g_nm / omega_nm)'|``.
    leakage:
        ``sum_{m,l} int_0^t |g_nm / omega_nm| |g_ml|``.
    constant_case:
        Time-independent bound of the constant-coefficient case, if requested.
    """

    times: ndarray
    boundary: ndarray
    drift: ndarray
    leakage: ndarray
    constant_case: Optional[float] = None

    @property
    def total(self) -> ndarray:
        return self.boundary + self.drift + self.leakage


def error_bound(flow: SpectralFlow, n: int,
                constant_solution: Optional["ConstantCaseSolution"] = None) -> ErrorBound:
    """Three-term infidelity bound along the grid."""
    a_values, _ = condition_A(flow, n)
    b_cum = condition_B(flow, n)
    _, _, c_per_m = condition_C(flow, n)
    const = None
    if constant_solution is not None and detect_constant(flow)["constant"]:
        const = constant_solution.bound_rhs
    return ErrorBound(flow.times, a_values.sum(axis=0), b_cum.sum(axis=0),
                      c_per_m.sum(axis=0), const)


def _thresholds(epsilon, overrides: Optional[Mapping[str, float]] = None) -> Dict[str, float]:
    if isinstance(epsilon, Mapping):
        out = {k: float(epsilon.get(k, DEFAULT_EPSILON)) for k in CONDITIONS}
    else:
        out = {k: float(epsilon) for k in CONDITIONS}
    if overrides:
        out.update({k: float(v) for k, v in overrides.items()})
    for k, v in out.items():
        if not v > 0:
            raise ParameterError(f"threshold for condition ({k}) must be positive, got {v}")
    return out


@dataclass(frozen=True)
class CriterionReport:
    """Values of every condition for one initial level on one grid.

    Curves are stored per channel with time along the last axis. Scalar
    ``*_value`` fields are the maxima over channels at ``tau``.
    """

    n_index: int
    times: ndarray
    channels: list
    pairs: list
    A_values: ndarray
    A_max: float
    B_integrals: ndarray
    C_integrals: ndarray
    C_per_m: ndarray
    b_values: ndarray
    c_values: ndarray
    B1_values: ndarray
    B1_monotonic: ndarray
    B1_log_terms: ndarray
    bound: ErrorBound
    epsilon: float
    thresholds: Dict[str, float]
    enabled: Tuple[str, ...]
    tau: float
    tau_admissible: float
    verdicts: Dict[str, bool]

    @property
    def bound_curve(self) -> ndarray:
        return self.bound.total

    @property
    def B_value(self) -> float:
        return float(self.B_integrals[:, -1].max())

    @property
    def C_value(self) -> float:
        return float(self.C_integrals[:, -1].max())

    @property
    def b_value(self) -> float:
        return float(self.b_values.max())

    @property
    def c_value(self) -> float:
        return float(self.c_values.max())

    @property
    def B1_value(self) -> float:
        return float(np.nanmax(self.B1_values)) if np.any(self.B1_monotonic) else math.nan

    @property
    def passed(self) -> bool:
        return all(self.verdicts[k] for k in self.enabled)

    def to_dict(self) -> dict:
        def arr(a):
            return np.asarray(a, dtype=float).tolist()

        return {
            "n_index": self.n_index,
            "epsilon": self.epsilon,
            "thresholds": dict(self.thresholds),
            "enabled": list(self.enabled),
            "tau": self.tau,
            "tau_admissible": self.tau_admissible,
            "passed": self.passed,
            "verdicts": dict(self.verdicts),
            "channels": list(self.channels),
            "pairs": [list(p) for p in self.pairs],
            "A_max": self.A_max,
            "B_value": self.B_value,
            "C_value": self.C_value,
            "b_value": self.b_value,
            "c_value": self.c_value,
            "b_values": arr(self.b_values),
            "c_values": arr(self.c_values),
            "B1_value": _json_float(self.B1_value),
            "B1_values": [_json_float(v) for v in self.B1_values],
            "B1_monotonic": [bool(v) for v in self.B1_monotonic],
            "B1_log_terms": arr(self.B1_log_terms),
            "bound_final": float(self.bound_curve[-1]),
            "constant_case_bound": self.bound.constant_case,
            "times": arr(self.times),
            "A_values": arr(self.A_values),
            "B_integrals": arr(self.B_integrals),
            "C_integrals": arr(self.C_integrals),
            "bound_curve": arr(self.bound_curve),
        }


def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def _first_violation(report_curves, thresholds, enabled) -> Optional[int]:
    a, b, c = report_curves
    bad = np.zeros(a.shape[-1], dtype=bool)
    if "A" in enabled:
        bad |= a.max(axis=0) >= thresholds["A"]
    if "B" in enabled:
        bad |= b.max(axis=0) >= thresholds["B"]
    if "C" in enabled:
        bad |= c.max(axis=0) >= thresholds["C"]
    hits = np.flatnonzero(bad)
    return int(hits[0]) if len(hits) else None


def admissible_time(report: CriterionReport, epsilon=None,
                    enabled: Optional[Iterable[str]] = None) -> float:
    """Largest grid time up to which every enabled condition stays below threshold.

    (A) is checked as a running maximum, (B) and (C) through their
    cumulative curves. Returns the grid end when no condition is ever
    exceeded, and ``t_0`` when one already fails there.
    """
    thresholds = report.thresholds if epsilon is None else _thresholds(epsilon)
    enabled = report.enabled if enabled is None else tuple(enabled)
    k = _first_violation((report.A_values, report.B_integrals, report.C_integrals),
                         thresholds, enabled)
    if k is None:
        return float(report.times[-1])
    return float(report.times[max(k - 1, 0)])


def audit(flow: SpectralFlow, n: int, epsilon=DEFAULT_EPSILON,
          thresholds: Optional[Mapping[str, float]] = None,
          enabled: Sequence[str] = CONDITIONS, tau: Optional[float] = None,
          constant_solution: Optional["ConstantCaseSolution"] = None) -> CriterionReport:
    """Evaluate all conditions and the bound for level ``n`` on ``flow``."""
    _check_n(flow, n)
    enabled = tuple(enabled)
    for k in enabled:
        if k not in CONDITIONS:
            raise ParameterError(f"unknown condition {k!r}")
    if isinstance(epsilon, (int, float)) and not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    thr = _thresholds(epsilon, thresholds)
    tau = float(flow.times[-1]) if tau is None else float(tau)

    a_values, a_max = condition_A(flow, n)
    b_cum = condition_B(flow, n)
    pairs, c_pair, c_m = condition_C(flow, n)
    b_strong, c_strong = strong_forms(flow, n, tau)
    b1, mono, logs = condition_B1(flow, n, tau)
    bound = error_bound(flow, n, constant_solution)

    verdicts = {
        "A": bool(a_max < thr["A"]),
        "B": bool(b_cum[:, -1].max() < thr["B"]),
        "C": bool(c_pair[:, -1].max() < thr["C"]),
        "b": bool(b_strong.max() < thr["B"]),
        "c": bool(c_strong.max() < thr["C"]),
    }
    if np.any(mono):
        verdicts["B1"] = bool(np.nanmax(b1) < thr["B"])
    k = _first_violation((a_values, b_cum, c_pair), thr, enabled)
    tau_adm = float(flow.times[-1]) if k is None else float(flow.times[max(k - 1, 0)])
    eps_value = float(epsilon) if not isinstance(epsilon, Mapping) else DEFAULT_EPSILON
    return CriterionReport(
        n_index=n, times=flow.times, channels=_others(flow, n), pairs=pairs,
        A_values=a_values, A_max=a_max, B_integrals=b_cum, C_integrals=c_pair, C_per_m=c_m,
        b_values=b_strong, c_values=c_strong, B1_values=b1, B1_monotonic=mono,
        B1_log_terms=logs, bound=bound, epsilon=eps_value, thresholds=thr, enabled=enabled,
        tau=tau, tau_admissible=tau_adm, verdicts=verdicts)


@dataclass(frozen=True)
class ConstantCaseSolution:
    """Normal modes of the constant-coefficient amplitude equations.

    ``cbar_m(t) = sum_j p_j a_mj exp(i lambda_j t)`` solves
    ``(omega_nm - lambda) a_m + i sum_{l != m} g_ml a_l = 0`` with
    ``cbar_m(0) = delta_mn``.

    Attributes
    ----------
    lambdas:
        Mode frequencies ``lambda_j``.
    amplitudes:
        ``a_mj`` as columns, shape (N, N).
    weights:
        ``p_j``.
    I_bounds:
        ``2 sum_j |p_j a_lj / lambda_j|`` per level ``l``; ``None`` when the
        levels are decoupled.
    bound_rhs:
        ``sum_{m != n} |g_nm/omega_nm| (1 + sum_{l != m} |g_ml| I_l)``.
    decoupled:
        True when every coupling vanishes, in which case ``F = 1`` exactly.
    """

    n_index: int
    K: ndarray
    lambdas: ndarray
    amplitudes: ndarray
    weights: ndarray
    I_bounds: Optional[ndarray]
    bound_rhs: float
    decoupled: bool
    initial_residual: float
    hermiticity_defect: float
    conditioning_warning: bool = False

    def to_dict(self) -> dict:
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return {
            "n_index": self.n_index,
            "decoupled": self.decoupled,
            "K": cplx(self.K),
            "lambdas": np.asarray(self.lambdas, dtype=float).tolist(),
            "amplitudes": cplx(self.amplitudes),
            "weights": cplx(self.weights),
            "I_bounds": None if self.I_bounds is None else np.asarray(self.I_bounds).tolist(),
            "bound_rhs": self.bound_rhs,
            "initial_residual": self.initial_residual,
            "hermiticity_defect": self.hermiticity_defect,
            "conditioning_warning": self.conditioning_warning,
        }


def constant_case_solve(flow: SpectralFlow, n: int, tol: float = CONSTANT_TOL,
                        warn_ratio: float = 1e-6) -> ConstantCaseSolution:
    """Solve the constant-coefficient amplitude equations at t = 0.

    Raises
    ------
    PreconditionError
        If gaps or couplings are not constant along the flow.
    ConditioningError
        If some ``|lambda_j|`` is below ``1e-12 ||K||``.
    """
    _check_n(flow, n)
    const = detect_constant(flow, tol)
    if not const["constant"]:
        raise PreconditionError(
            "gaps and couplings are not constant (deviations "
            f"{const['gap_deviation']:.3e}, {const['coupling_deviation']:.3e})")
    dim = flow.dimension
    omega_n = flow.energies[0, n] - flow.energies[0]
    g0 = flow.couplings[0]
    kmat = np.diag(omega_n).astype(complex) + 1j * g0
    defect = float(np.max(np.abs(kmat - kmat.conj().T)))
    if defect > 1e-10 * max(1.0, float(np.max(np.abs(kmat)))):
        raise NumericalConsistencyError(f"mode matrix is not Hermitian (defect {defect:.3e})")
    kmat = 0.5 * (kmat + kmat.conj().T)
    lambdas, amps = np.linalg.eigh(kmat)
    delta = np.zeros(dim, dtype=complex)
    delta[n] = 1.0
    weights = np.linalg.solve(amps, delta)
    residual = float(np.max(np.abs(amps @ weights - delta)))

    if float(np.max(np.abs(g0))) < tol:
        return ConstantCaseSolution(n, kmat, lambdas, amps, weights, None, 0.0, True,
                                    residual, defect)

    norm = float(np.linalg.norm(kmat, 2))
    smallest = float(np.min(np.abs(lambdas)))
    if smallest < 1e-12 * norm:
        raise ConditioningError(
            f"mode frequency {smallest:.3e} is zero relative to ||K|| = {norm:.3e}")
    ill = smallest < warn_ratio * norm
    if ill:
        warnings.warn(f"near-resonant mode |lambda| = {smallest:.3e}; integral bounds are large",
                      RuntimeWarning, stacklevel=2)
    i_bounds = 2.0 * np.sum(np.abs(weights[None, :] * amps / lambdas[None, :]), axis=1)
    rhs = 0.0
    for m in range(dim):
        if m == n:
            continue
        inner = sum(abs(g0[m, l]) * i_bounds[l] for l in range(dim) if l != m)
        rhs += abs(g0[n, m] / omega_n[m]) * (1.0 + inner)
    return ConstantCaseSolution(n, kmat, lambdas, amps, weights, i_bounds, float(rhs), False,
                                residual, defect, ill)


def constant_case_amplitudes(solution: ConstantCaseSolution, times) -> ndarray:
    """``cbar_m(t) = sum_j p_j a_mj exp(i lambda_j t)``, shape (K, N)."""
    t = np.asarray(times, dtype=float)
    modes = solution.weights[None, :] * np.exp(1j * np.outer(t, solution.lambdas))
    return modes @ solution.amplitudes.T


def check_integral_bounds(solution: ConstantCaseSolution, flow: SpectralFlow, coefficients,
                          n_samples: int = 100, seed: int = 0) -> dict:
    """Compare ``|int_0^t exp(i omega_nl t') c_l dt'|`` with ``I_bounds[l]``.

    ``coefficients`` are evolved ``c_l(t_k)`` on the flow grid. The integral
    is computed by exact integration of a cubic spline of the integrand and
    inspected at ``n_samples`` random grid times.
    """
    if solution.I_bounds is None:
        raise PreconditionError("decoupled system: no integral bounds to check")
    n = solution.n_index
    t = flow.times
    omega_n = flow.energies[0, n] - flow.energies[0]
    cbar = np.asarray(coefficients) * np.exp(1j * np.outer(t, omega_n))
    integral = CubicSpline(t, cbar, axis=0).antiderivative()(t)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(t), size=min(n_samples, len(t)), replace=False))
    measured = np.abs(integral[idx])
    ratio = measured / solution.I_bounds[None, :]
    return {
        "times": t[idx],
        "measured": measured,
        "bounds": solution.I_bounds,
        "max_ratio": float(ratio.max()),
        "passed": bool(np.all(measured <= solution.I_bounds[None, :])),
    }


@dataclass(frozen=True)
class ScalingScan:
    """Conditions of ``H(t/T)`` audited on ``[0, T]`` for several ``T``.

    ``B_envelope`` and ``C_envelope`` are the base-model constants ``k`` of
    the upper bounds ``B(T) <= k_B / T`` and ``C(T) <= k_C / T``, computed
    from maxima over the unit interval.
    """

    T: ndarray
    A_max: ndarray
    B: ndarray
    C: ndarray
    infidelity: Optional[ndarray]
    A_exponent: float
    B_exponent: float
    C_exponent: float
    B_envelope: float
    C_envelope: float
    A_unit: float

    def rows(self):
        for i, T in enumerate(self.T):
            inf = None if self.infidelity is None else float(self.infidelity[i])
            yield {"T": float(T), "A_max": float(self.A_max[i]), "B": float(self.B[i]),
                   "C": float(self.C[i]), "infidelity": inf}


def _unit_envelopes(flow: SpectralFlow, n: int) -> Tuple[float, float, float]:
    """Maxima over the unit interval bounding the rescaled (A), (B), (C)."""
    others = _others(flow, n)
    h = flow.grid.step
    gaps = flow.energies[:, [n]] - flow.energies[:, others]
    g = flow.couplings[:, n, others]
    ratio = np.abs(g / gaps).max(axis=0)
    gap_rate = np.abs(_derivative(gaps, h) / gaps).max(axis=0)
    g_rate = np.abs(_derivative(g, h) / gaps).max(axis=0)
    b_env = float(np.max(ratio * gap_rate + g_rate))
    c_env = max(float(ratio[others.index(m)] * np.abs(flow.couplings[:, m, l]).max())
                for m, l in _pairs(flow, n))
    return float(ratio.max()), b_env, c_env


def rescaling_scan(base: HamiltonianModel, n: int, T_list: Sequence[float], n_steps: int,
                   evolve: bool = True) -> ScalingScan:
    """Audit ``rescale(base, T)`` on ``[0, T]`` with the same number of steps per ``T``.

    Matching the step count keeps the grids identical in ``s = t / T``, so
    the maximum of (A) scales exactly as ``1 / T``.
    """
    from .dynamics import evolve_state

    T_list = [float(T) for T in T_list]
    if not T_list:
        raise ParameterError("empty list of rescaling times")
    if base.t_max < 1.0 - 1e-12:
        raise ParameterError("the base model must be defined on s in [0, 1]")
    unit_flow = eigen_flow(base, TimeGrid(1.0, n_steps))
    a_unit, b_env, c_env = _unit_envelopes(unit_flow, n)
    a_vals, b_vals, c_vals, inf_vals = [], [], [], []
    for T in T_list:
        model = rescale(base, T)
        grid = TimeGrid(T, n_steps)
        flow = eigen_flow(model, grid)
        _, a_max = condition_A(flow, n)
        b_cum = condition_B(flow, n)
        _, c_pair, _ = condition_C(flow, n)
        a_vals.append(a_max)
        b_vals.append(float(b_cum[:, -1].max()))
        c_vals.append(float(c_pair[:, -1].max()))
        if evolve:
            evo = evolve_state(model, grid, n, flow=flow, estimate_error=False)
            inf_vals.append(float(evo.infidelity[-1]))
    T_arr = np.array(T_list)

    def exponent(values):
        values = np.asarray(values)
        if len(T_arr) < 2 or np.any(values <= 0):
            return math.nan
        return float(np.polyfit(np.log(T_arr), np.log(values), 1)[0])

    return ScalingScan(T_arr, np.array(a_vals), np.array(b_vals), np.array(c_vals),
                       np.array(inf_vals) if evolve else None, exponent(a_vals),
                       exponent(b_vals), exponent(c_vals), b_env, c_env, a_unit)


def report_to_json(report: CriterionReport, constant_solution: Optional[ConstantCaseSolution] = None,
                   extra: Optional[dict] = None) -> str:
    """Deterministic JSON document (sorted keys, shortest round-trip floats)."""
    doc = {"report": report.to_dict()}
    if constant_solution is not None:
        doc["constant_case"] = constant_solution.to_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def report_to_csv(report: CriterionReport) -> str:
    """Curves CSV with columns t, A_inst, B_cum, C_cum, bound_rhs.

    ``A_inst``, ``B_cum`` and ``C_cum`` are summed over channels, so that
    ``bound_rhs`` is their sum.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["t", "A_inst", "B_cum", "C_cum", "bound_rhs"])
    b = report.bound
    columns = np.column_stack([report.times, b.boundary, b.drift, b.leakage, b.total])
    for row in columns.tolist():
        writer.writerow([repr(x) for x in row])
    return out.getvalue()
