"""
Instantaneous eigenbasis along a time grid.

The eigenvectors are tracked by maximal overlap between neighbouring grid
points and their phases are fixed by discrete parallel transport: every
overlap ``<E_m(t_k)|E_m(t_{k+1})>`` is made real and positive, and the
small connection this leaves behind is then integrated away, so that
``<E_m|dE_m/dt> = 0`` holds to the accuracy of a cubic spline.
"""

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy import ndarray
from scipy.interpolate import CubicSpline
from scipy.optimize import linear_sum_assignment

from .errors import DegeneracyError, NumericalConsistencyError, ResolutionError
from .hamiltonians import HamiltonianModel, TimeGrid

__all__ = [
    "SpectralFlow",
    "eigen_flow",
    "couplings_hellmann_feynman",
    "couplings_finite_difference",
    "detect_constant",
    "flow_to_csv",
]

MIN_OVERLAP = 0.9
CONSTANT_TOL = 1e-8
CONSISTENCY_TOL = 1e-5


def _dagger(a: ndarray) -> ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class SpectralFlow:
    """Gauge-fixed spectral data on a grid.

    Attributes
    ----------
    grid:
        The time grid.
    energies:
        ``E_m(t_k)``, shape (K, N); ascending in m at t_0, followed by
        continuity afterwards.
    vectors:
        ``|E_m(t_k)>`` as columns, shape (K, N, N).
    couplings:
        ``g_ml(t_k) = <E_m|dE_l/dt>`` with zero diagonal, shape (K, N, N).
    coupling_method:
        ``"hellmann-feynman"`` or ``"finite-difference"``.
    """

    grid: TimeGrid
    energies: ndarray
    vectors: ndarray
    couplings: ndarray
    coupling_method: str

    @property
    def times(self) -> ndarray:
        return self.grid.points

    @property
    def dimension(self) -> int:
        return self.energies.shape[1]

    @property
    def gaps(self) -> ndarray:
        """``omega_ml(t_k) = E_m - E_l``, shape (K, N, N)."""
        return self.energies[:, :, None] - self.energies[:, None, :]

    @property
    def min_gap(self) -> float:
        return _min_gap(self.energies)[0]


def _min_gap(energies: ndarray):
    n = energies.shape[1]
    diffs = np.abs(energies[:, :, None] - energies[:, None, :])
    diffs[:, np.arange(n), np.arange(n)] = np.inf
    per_time = diffs.reshape(len(energies), -1).min(axis=1)
    k = int(np.argmin(per_time))
    return float(per_time[k]), k


def _track(raw_vals: ndarray, raw_vecs: ndarray, times: ndarray):
    """Branch assignment and parallel-transport phases for raw eigh output."""
    K, N = raw_vals.shape
    overlaps = _dagger(raw_vecs[:-1]) @ raw_vecs[1:]  # (K-1, N, N): <raw_i(k)|raw_j(k+1)>
    mags = np.abs(overlaps)
    succ = np.argmax(mags, axis=2)
    arange = np.arange(N)
    is_perm = np.all(np.sort(succ, axis=1) == arange, axis=1)
    for k in np.flatnonzero(~is_perm):
        _, cols = linear_sum_assignment(-mags[k])
        succ[k] = cols

    order = np.empty((K, N), dtype=int)
    order[0] = arange
    if np.all(succ == arange):
        order[:] = arange
    else:
        for k in range(K - 1):
            order[k + 1] = succ[k][order[k]]

    rows = order[:-1]
    cols = order[1:]
    kk = np.arange(K - 1)[:, None]
    chosen = overlaps[kk, rows, cols]
    weakest = np.abs(chosen).min(axis=1)
    if len(weakest) and weakest.min() < MIN_OVERLAP:
        k = int(np.argmin(weakest))
        raise ResolutionError(
            f"eigenvector overlap {weakest[k]:.3f} < {MIN_OVERLAP} between t = {float(times[k])!r} "
            f"and t = {float(times[k + 1])!r}; increase the number of steps")
    tracked = raw_vals[np.arange(K)[:, None], order]
    jumps = np.abs(np.diff(tracked, axis=0)).max(axis=1)
    local_gap = np.min(np.diff(raw_vals, axis=1), axis=1)[:-1] if N > 1 else np.full(K - 1, np.inf)
    bad = np.flatnonzero(jumps > 0.5 * local_gap)
    if len(bad):
        k = int(bad[0])
        raise ResolutionError(
            f"tracked level jumps by {jumps[k]:.3e} between t = {float(times[k])!r} and "
            f"t = {float(times[k + 1])!r}; increase the number of steps")
    unit = chosen / np.abs(chosen)
    phases = np.ones((K, N), dtype=complex)
    phases[1:] = np.cumprod(np.conj(unit), axis=0)
    phases /= np.abs(phases)
    return order, phases


def _transport_correction(times: ndarray, vectors: ndarray) -> ndarray:
    """Remove the O(h^2) connection left by real-positive overlaps.

    Real overlaps leave ``Im<E|dE/dt> ~ (h^2/6) Im<dE|d2E>``, which builds
    up a phase drift over long runs. The residual connection is measured
    with a spline derivative and integrated away.
    """
    if len(times) < 4:
        return vectors
    spline = CubicSpline(times, vectors, axis=0)
    conn = np.imag(np.einsum("kim,kim->km", np.conj(vectors), spline(times, 1)))
    drift = CubicSpline(times, conn, axis=0).antiderivative()(times)
    return vectors * np.exp(-1j * drift)[:, None, :]


def eigen_flow(model: HamiltonianModel, grid: TimeGrid, degeneracy_tol: Optional[float] = None,
               phase_offsets=None) -> SpectralFlow:
    """Diagonalise ``model`` on ``grid`` in the parallel-transport gauge.

    Parameters
    ----------
    model:
        Hamiltonian to diagonalise.
    grid:
        Time grid; successive eigenvectors must overlap by more than 0.9.
    degeneracy_tol:
        Smallest admissible level spacing. Defaults to
        ``1e-6 * max|E(0)|``.
    phase_offsets:
        Optional unit phases multiplying the initial eigenvectors. Every
        reported modulus is independent of this choice.

    Raises
    ------
    DegeneracyError
        If two levels come closer than ``degeneracy_tol``.
    ResolutionError
        If the grid is too coarse for overlap tracking.
    """
    model.check_grid(grid)
    times = grid.points
    h = model.sample(times)
    raw_vals, raw_vecs = np.linalg.eigh(h)

    if degeneracy_tol is None:
        degeneracy_tol = 1e-6 * max(float(np.max(np.abs(raw_vals[0]))), 1e-300)
    gap, k = _min_gap(raw_vals)
    if gap < degeneracy_tol:
        raise DegeneracyError(
            f"levels closer than {degeneracy_tol:.3e} (gap {gap:.3e}) at t = {float(times[k])!r}",
            time=float(times[k]))

    order, phases = _track(raw_vals, raw_vecs, times)
    kk = np.arange(len(times))[:, None]
    energies = raw_vals[kk, order]
    vectors = np.take_along_axis(raw_vecs, order[:, None, :], axis=2) * phases[:, None, :]
    vectors = _transport_correction(times, vectors)
    if phase_offsets is not None:
        vectors = vectors * np.asarray(phase_offsets, dtype=complex)[None, None, :]

    residual = np.max(np.linalg.norm(h @ vectors - vectors * energies[:, None, :], axis=1))
    scale = max(1.0, float(np.max(np.abs(energies))))
    if residual > 1e-10 * scale:
        raise NumericalConsistencyError(f"eigenpair residual {residual:.3e} too large")

    flow = SpectralFlow(grid, energies, vectors, np.zeros_like(vectors), "")
    if model.has_derivative:
        g = couplings_hellmann_feynman(model, flow, cross_check=False)
        method = "hellmann-feynman"
    else:
        g = couplings_finite_difference(flow)
        method = "finite-difference"
    return SpectralFlow(grid, energies, vectors, g, method)


def couplings_finite_difference(flow: SpectralFlow) -> ndarray:
    """``<E_m(t)| (|E_l(t+h)> - |E_l(t-h)>) / 2h`` in the transported gauge.

    Second-order central differences inside the grid, second-order one-sided
    differences at the two ends. The diagonal is set to zero (gauge).
    """
    dv = np.gradient(flow.vectors, flow.grid.step, axis=0, edge_order=2)
    g = _dagger(flow.vectors) @ dv
    n = flow.dimension
    g[:, np.arange(n), np.arange(n)] = 0.0
    return g


def couplings_hellmann_feynman(model: HamiltonianModel, flow: SpectralFlow,
                               cross_check: bool = True) -> ndarray:
    """``g_ml = <E_m|dH/dt|E_l> / (E_l - E_m)`` for ``m != l``.

    With ``cross_check`` the result is compared against
    :func:`couplings_finite_difference`; a disagreement above 1e-5 in maximum
    modulus raises :class:`NumericalConsistencyError`.
    """
    dh = model.sample_derivative(flow.times)
    v = flow.vectors
    num = _dagger(v) @ dh @ v
    denom = flow.energies[:, None, :] - flow.energies[:, :, None]
    n = flow.dimension
    idx = np.arange(n)
    denom[:, idx, idx] = 1.0
    g = num / denom
    g[:, idx, idx] = 0.0
    if cross_check:
        fd = couplings_finite_difference(flow)
        err = float(np.max(np.abs(g - fd)))
        if err > CONSISTENCY_TOL:
            raise NumericalConsistencyError(
                f"Hellmann-Feynman and finite-difference couplings differ by {err:.3e}")
    return g


def detect_constant(flow: SpectralFlow, tol: float = CONSTANT_TOL) -> dict:
    """Whether gaps and couplings stay within ``tol`` of their t = 0 values."""
    gaps = flow.gaps
    gap_dev = float(np.max(np.abs(gaps - gaps[0])))
    g_dev = float(np.max(np.abs(flow.couplings - flow.couplings[0])))
    gaps_const = gap_dev < tol
    couplings_const = g_dev < tol
    return {
        "gaps": gaps_const,
        "couplings": couplings_const,
        "constant": gaps_const and couplings_const,
        "gap_deviation": gap_dev,
        "coupling_deviation": g_dev,
    }


def flow_to_csv(flow: SpectralFlow) -> str:
    """CSV dump: t, E_1..E_N, then |g_ml| and arg(g_ml) for every ordered pair."""
    n = flow.dimension
    pairs = [(m, l) for m in range(n) for l in range(n) if m != l]
    header = ["t"] + [f"E_{m + 1}" for m in range(n)]
    for m, l in pairs:
        header += [f"abs_g_{m + 1}{l + 1}", f"arg_g_{m + 1}{l + 1}"]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    g = flow.couplings
    for k, t in enumerate(flow.times):
        row = [repr(float(t))] + [repr(float(e)) for e in flow.energies[k]]
        for m, l in pairs:
            row += [repr(float(abs(g[k, m, l]))), repr(float(np.angle(g[k, m, l])))]
        writer.writerow(row)
    return out.getvalue()
