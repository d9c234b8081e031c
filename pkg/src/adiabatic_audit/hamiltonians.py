"""
Time-dependent Hermitian Hamiltonians.

Every model is an immutable :class:`HamiltonianModel` wrapping a vectorised
matrix function ``t -> H(t)`` and, when available, its time derivative.
Units follow ħ = 1, so times are measured in inverse energy.
"""

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from numpy import ndarray
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import AccuracyError, FormatError, ParameterError

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "TimeGrid",
    "SpinHalfParams",
    "MatrixSampleTable",
    "HamiltonianModel",
    "build_spin_half",
    "build_constant",
    "build_smooth_random",
    "from_samples",
    "load_sample_table",
    "write_sample_table",
    "rescale",
    "build_counterexample_b",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITICITY_TOL = 1e-10
_DOMAIN_SLACK = 1e-9

MatrixFunction = Callable[[ndarray], ndarray]


def hermiticity_defect(h: ndarray) -> float:
    """Largest entrywise modulus of ``H - H^dagger`` over a (stack of) matrices."""
    h = np.asarray(h)
    return float(np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2))), initial=0.0))


def _symmetrize(h: ndarray) -> ndarray:
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start = t_0 < t_1 < ... < t_{n_steps} = t_end``.

    ``n_steps`` counts intervals, so the grid has ``n_steps + 1`` points.
    """

    t_end: float
    n_steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if self.t_start != 0.0:
            raise ParameterError("time grids start at t = 0")
        if not self.n_steps >= 2:
            raise ParameterError(f"n_steps must be >= 2, got {self.n_steps}")
        if not self.t_end > self.t_start:
            raise ParameterError(f"t_end must exceed t_start, got {self.t_end}")

    @property
    def points(self) -> ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def __len__(self):
        return self.n_steps + 1

    def refined(self, factor: int = 2) -> "TimeGrid":
        """Grid over the same interval with ``factor`` times as many steps."""
        return TimeGrid(self.t_end, self.n_steps * factor, self.t_start)


@dataclass(frozen=True)
class SpinHalfParams:
    """Field strength ``omega0``, rotation rate ``omega`` and cone angle ``theta``."""

    omega0: float
    omega: float
    theta: float

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ParameterError(f"omega0 must be positive, got {self.omega0}")
        if not self.omega >= 0:
            raise ParameterError(f"omega must be non-negative, got {self.omega}")
        if not 0.0 <= self.theta <= math.pi:
            raise ParameterError(f"theta must lie in [0, pi], got {self.theta}")


@dataclass(frozen=True)
class MatrixSampleTable:
    """Hermitian matrices sampled at strictly increasing times."""

    times: ndarray
    matrices: ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        mats = np.asarray(self.matrices, dtype=complex)
        if times.ndim != 1 or len(times) < 2:
            raise FormatError("a sample table needs at least two sample times")
        if mats.ndim != 3 or mats.shape[0] != len(times) or mats.shape[1] != mats.shape[2]:
            raise FormatError(
                f"matrices of shape {mats.shape} do not match {len(times)} square samples")
        steps = np.diff(times)
        if np.any(steps <= 0):
            bad = int(np.argmin(steps)) + 1
            raise FormatError(f"sample times must be strictly increasing (at t = {float(times[bad])!r})")
        for t, h in zip(times, mats):
            defect = hermiticity_defect(h)
            if defect > HERMITICITY_TOL:
                raise FormatError(
                    f"sample at t = {float(t)!r} is not Hermitian (max |H - H^dagger| = {defect:.3e})")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "matrices", mats)

    @property
    def dimension(self) -> int:
        return self.matrices.shape[1]


@dataclass(frozen=True)
class HamiltonianModel:
    """A Hermitian matrix family ``H(t)`` on ``[0, t_max]``.

    Attributes
    ----------
    kind:
        Model family, one of ``spin_half_rotating``, ``sampled_table``,
        ``rescaled``, ``counterexample_b``, ``constant``, ``smooth_random``.
    dimension:
        Hilbert-space dimension N.
    t_max:
        Right end of the time domain.
    parameters:
        Model-specific real scalars, kept for reporting.
    analytic_derivative:
        True when ``derivative`` is a closed form rather than the derivative
        of an interpolant.
    """

    kind: str
    dimension: int
    t_max: float
    matrix_fn: MatrixFunction = field(repr=False)
    derivative_fn: Optional[MatrixFunction] = field(default=None, repr=False)
    parameters: Mapping[str, float] = field(default_factory=dict)
    analytic_derivative: bool = False

    def __post_init__(self):
        if self.dimension < 2:
            raise ParameterError(f"dimension must be >= 2, got {self.dimension}")
        if not self.t_max > 0:
            raise ParameterError(f"t_max must be positive, got {self.t_max}")

    @property
    def has_derivative(self) -> bool:
        return self.derivative_fn is not None

    def _times(self, t) -> ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < -_DOMAIN_SLACK) or np.any(t > self.t_max * (1 + _DOMAIN_SLACK) + _DOMAIN_SLACK):
            raise ParameterError(f"time outside the model domain [0, {self.t_max}]")
        return t

    def evaluate(self, t) -> ndarray:
        """``H(t)``; a scalar ``t`` gives an (N, N) array, an array of K times (K, N, N)."""
        return _symmetrize(np.asarray(self.matrix_fn(self._times(t)), dtype=complex))

    def derivative(self, t) -> ndarray:
        """``dH/dt`` at ``t``, same broadcasting as :meth:`evaluate`."""
        if self.derivative_fn is None:
            raise ParameterError(f"model of kind {self.kind!r} exposes no derivative")
        return _symmetrize(np.asarray(self.derivative_fn(self._times(t)), dtype=complex))

    def sample(self, times: Union[TimeGrid, ndarray]) -> ndarray:
        times = times.points if isinstance(times, TimeGrid) else np.atleast_1d(times)
        return self.evaluate(times)

    def sample_derivative(self, times: Union[TimeGrid, ndarray]) -> ndarray:
        times = times.points if isinstance(times, TimeGrid) else np.atleast_1d(times)
        return self.derivative(times)

    def check_grid(self, grid: TimeGrid) -> None:
        if grid.t_end > self.t_max * (1 + _DOMAIN_SLACK):
            raise ParameterError(
                f"grid end {grid.t_end} exceeds model domain end {self.t_max}")


def build_spin_half(params: SpinHalfParams, t_max: float) -> HamiltonianModel:
    """Spin one-half in a field of strength ``omega0`` precessing about z.

    H(t) = -(omega0/2) (sin(theta) cos(omega t) sx + sin(theta) sin(omega t) sy + cos(theta) sz)
    """
    w0, w, th = params.omega0, params.omega, params.theta
    st, ct = math.sin(th), math.cos(th)

    def matrix(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return -0.5 * w0 * (st * np.cos(w * t) * SIGMA_X
                            + st * np.sin(w * t) * SIGMA_Y
                            + ct * SIGMA_Z)

    def derivative(t):
        t = np.asarray(t, dtype=float)[..., None, None]
        return -0.5 * w0 * w * st * (-np.sin(w * t) * SIGMA_X + np.cos(w * t) * SIGMA_Y)

    return HamiltonianModel(
        kind="spin_half_rotating",
        dimension=2,
        t_max=float(t_max),
        matrix_fn=matrix,
        derivative_fn=derivative,
        parameters={"omega0": w0, "omega": w, "theta": th},
        analytic_derivative=True,
    )


def build_constant(matrix, t_max: float) -> HamiltonianModel:
    """A time-independent Hamiltonian."""
    h = np.asarray(matrix, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ParameterError("constant Hamiltonian must be a square matrix")
    if hermiticity_defect(h) > HERMITICITY_TOL:
        raise ParameterError("constant Hamiltonian is not Hermitian")
    h = _symmetrize(h)
    zero = np.zeros_like(h)

    def matrix_fn(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(h, t.shape + h.shape).copy()

    def derivative_fn(t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(zero, t.shape + h.shape).copy()

    return HamiltonianModel("constant", h.shape[0], float(t_max), matrix_fn, derivative_fn,
                            {}, analytic_derivative=True)


def _random_hermitian(rng: np.random.Generator, dim: int) -> ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T) / math.sqrt(dim)


def build_smooth_random(dim: int, seed: int, t_max: float, *, spacing: float = 2.0,
                        amplitude: float = 0.3, rate: float = 0.2,
                        n_modes: int = 2) -> HamiltonianModel:
    """Random smooth N-level Hamiltonian with a well separated spectrum.

    ``H(t) = H0 + sum_j sin(nu_j t + phi_j) H_j`` where ``H0`` has levels
    spaced by ``spacing`` plus a small random Hermitian part, each ``H_j`` is a
    random Hermitian matrix of norm about ``amplitude`` and the ``nu_j`` are
    drawn from ``[rate/2, rate]``. The trace is removed so the mean energy is 0.
    """
    if dim < 2:
        raise ParameterError("dimension must be >= 2")
    rng = np.random.default_rng(seed)
    levels = spacing * (np.arange(dim) - 0.5 * (dim - 1))
    h0 = np.diag(levels).astype(complex) + 0.1 * amplitude * _random_hermitian(rng, dim)
    modes = np.stack([amplitude * _random_hermitian(rng, dim) for _ in range(n_modes)])
    freqs = rng.uniform(0.5 * rate, rate, size=n_modes)
    phases = rng.uniform(0, 2 * math.pi, size=n_modes)
    h0 -= np.trace(h0) / dim * np.eye(dim)
    for k in range(n_modes):
        modes[k] -= np.trace(modes[k]) / dim * np.eye(dim)

    def matrix_fn(t):
        t = np.asarray(t, dtype=float)[..., None]
        s = np.sin(freqs * t + phases)
        return h0 + np.tensordot(s, modes, axes=([-1], [0]))

    def derivative_fn(t):
        t = np.asarray(t, dtype=float)[..., None]
        c = freqs * np.cos(freqs * t + phases)
        return np.tensordot(c, modes, axes=([-1], [0]))

    params = {"seed": seed, "spacing": spacing, "amplitude": amplitude, "rate": rate}
    return HamiltonianModel("smooth_random", dim, float(t_max), matrix_fn, derivative_fn,
                            params, analytic_derivative=True)


def from_samples(table: MatrixSampleTable, derivatives: Optional[ndarray] = None,
                 kind: str = "sampled_table") -> HamiltonianModel:
    """Interpolate a sample table with piecewise cubics.

    Without ``derivatives`` a not-a-knot cubic spline is used; its value error
    is O(h^4) and its derivative error O(h^3) in the sample spacing h. When
    sampled derivatives are supplied, a cubic Hermite interpolant through both
    values and derivatives is used instead (same orders, derivative exact at
    the samples).
    """
    times, mats = table.times, _symmetrize(table.matrices)
    if derivatives is None:
        spline = CubicSpline(times, mats, axis=0)
        deriv = spline.derivative()
    else:
        spline = CubicHermiteSpline(times, mats, _symmetrize(np.asarray(derivatives)), axis=0)
        deriv = spline.derivative()
    return HamiltonianModel(kind, table.dimension, float(times[-1]), spline, deriv,
                            {"samples": len(times)}, analytic_derivative=False)


def _parse_complex(token: str, where: str) -> complex:
    parts = token.split(",")
    if len(parts) != 2:
        raise FormatError(f"{where}: expected 're,im', got {token!r}")
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise FormatError(f"{where}: cannot parse {token!r} as a complex number") from None


def parse_sample_table(text: str) -> MatrixSampleTable:
    """Parse the sampled-Hamiltonian text format.

    Layout::

        N <dim> SAMPLES <count>
        t <time>
        <N lines of N 're,im' entries>
        ...
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise FormatError("empty sample table")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "N" or head[2] != "SAMPLES":
        raise FormatError(f"bad header {lines[0]!r}; expected 'N <dim> SAMPLES <count>'")
    try:
        dim, count = int(head[1]), int(head[3])
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}") from None
    if dim < 1 or count < 1:
        raise FormatError("dimension and sample count must be positive")
    if len(lines) != 1 + count * (dim + 1):
        raise FormatError(
            f"expected {count} blocks of {dim + 1} lines, found {len(lines) - 1} lines")
    times = np.empty(count)
    mats = np.empty((count, dim, dim), dtype=complex)
    pos = 1
    for k in range(count):
        tline = lines[pos].split()
        if len(tline) != 2 or tline[0] != "t":
            raise FormatError(f"sample {k}: expected 't <time>', got {lines[pos]!r}")
        try:
            times[k] = float(tline[1])
        except ValueError:
            raise FormatError(f"sample {k}: bad time {tline[1]!r}") from None
        for i in range(dim):
            row = lines[pos + 1 + i].split()
            if len(row) != dim:
                raise FormatError(f"sample at t = {float(times[k])!r}, row {i}: expected {dim} entries")
            where = f"sample at t = {float(times[k])!r}, row {i}"
            mats[k, i] = [_parse_complex(tok, where) for tok in row]
        pos += dim + 1
    return MatrixSampleTable(times, mats)


def load_sample_table(source) -> HamiltonianModel:
    """Build an interpolated model from a byte stream, bytes, or a path."""
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    return from_samples(parse_sample_table(text))


def write_sample_table(times: Sequence[float], matrices, stream=None) -> str:
    """Serialise samples in the sampled-Hamiltonian format; returns the text."""
    mats = np.asarray(matrices, dtype=complex)
    out = io.StringIO()
    out.write(f"N {mats.shape[1]} SAMPLES {len(times)}\n")
    for t, h in zip(times, mats):
        out.write(f"t {float(t)!r}\n")
        for row in h:
            out.write(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text if isinstance(stream, io.TextIOBase) else text.encode("utf-8"))
    return text


def rescale(base: HamiltonianModel, T: float) -> HamiltonianModel:
    """``H(t / T)``: stretches the base domain ``[0, L]`` to ``[0, T L]``.

    The derivative picks up a factor ``1 / T``.
    """
    if not T > 0:
        raise ParameterError(f"rescaling time T must be positive, got {T}")
    T = float(T)
    base_fn, base_d = base.matrix_fn, base.derivative_fn

    def matrix_fn(t):
        return base_fn(np.asarray(t, dtype=float) / T)

    def scaled_derivative(t):
        return base_d(np.asarray(t, dtype=float) / T) / T

    derivative_fn = scaled_derivative if base_d is not None else None

    params = dict(base.parameters)
    params["T"] = T * params.get("T", 1.0)
    return HamiltonianModel("rescaled", base.dimension, base.t_max * T, matrix_fn,
                            derivative_fn, params, base.analytic_derivative)


UNITARITY_TOL = 1e-8


def build_counterexample_b(base: HamiltonianModel, grid: TimeGrid,
                           identity_check: bool = True) -> HamiltonianModel:
    """Partner Hamiltonian ``H^b = i dU^dagger/dt U`` of ``H^a = base``.

    ``U`` is the propagator of ``base`` (``i dU/dt = H^a U``). Substituting
    ``dU^dagger/dt = i U^dagger H^a`` gives ``H^b = -U^dagger H^a U`` and
    ``dH^b/dt = -U^dagger (dH^a/dt) U``; both are sampled on ``grid`` and
    joined by a cubic Hermite interpolant.
    """
    from .dynamics import propagator

    base.check_grid(grid)
    times = grid.points
    u = propagator(base, grid)
    udag = np.conj(np.swapaxes(u, -1, -2))
    ha = base.sample(times)
    hb = -udag @ ha @ u
    if identity_check:
        _check_counterexample_identity(u, hb, grid.step)
    dhb = None
    if base.has_derivative:
        dhb = -udag @ base.sample_derivative(times) @ u
    model = from_samples(MatrixSampleTable(times, _symmetrize(hb)), dhb, kind="counterexample_b")
    params = dict(base.parameters)
    params["base_kind"] = base.kind
    return HamiltonianModel("counterexample_b", model.dimension, model.t_max, model.matrix_fn,
                            model.derivative_fn, params, False)


def _check_counterexample_identity(u: ndarray, hb: ndarray, h: float) -> float:
    """Compare ``i (dU^dagger/dt) U`` by central differences against ``-U^dagger H^a U``."""
    udag = np.conj(np.swapaxes(u, -1, -2))
    dudag = (udag[2:] - udag[:-2]) / (2 * h)
    lhs = 1j * dudag @ u[1:-1]
    scale = max(1.0, float(np.max(np.abs(hb))))
    residual = float(np.max(np.abs(lhs - hb[1:-1]))) / scale
    # central differences are O(h^2) in the fastest frequency present
    budget = 10.0 * (scale * h) ** 2 + 1e-7
    if residual > budget:
        raise AccuracyError(
            f"identity i dU^dagger/dt U = -U^dagger H U violated by {residual:.3e}; refine the grid")
    return residual
