"""Independent reference solutions used by the test-suite.

Nothing here calls into the integrators or the spectral flow of the package.
"""

import math

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
EYE = np.eye(2, dtype=complex)


def pauli_exp(vec, t):
    """exp(-i t vec.sigma) for a real 3-vector, by the Pauli-algebra closed form."""
    vec = np.asarray(vec, dtype=float)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return EYE.copy()
    n = vec / norm
    ns = n[0] * SX + n[1] * SY + n[2] * SZ
    return math.cos(norm * t) * EYE - 1j * math.sin(norm * t) * ns


def spin_field(omega0, theta):
    """H(0) = a.sigma with a = -(omega0/2)(sin theta, 0, cos theta)."""
    return -0.5 * omega0 * np.array([math.sin(theta), 0.0, math.cos(theta)])


def spin_eigvec(omega0, theta, t, omega, upper):
    """Instantaneous eigenvector of the rotating spin (arbitrary phase)."""
    # lower level of -(omega0/2) n.sigma is the spin along n
    half = theta / 2
    phi = omega * t
    up = np.array([math.cos(half), math.sin(half) * np.exp(1j * phi)])
    down = np.array([-math.sin(half), math.cos(half) * np.exp(1j * phi)])
    return down if upper else up


def rotating_frame_states(omega0, omega, theta, times, upper=False):
    """Exact |psi(t)> from |E(0)> via the frame rotating at omega about z.

    With H(t) = R(t) H(0) R(t)^dagger, R(t) = exp(-i omega t sz / 2), the
    rotating-frame Hamiltonian H(0) - (omega/2) sz is constant, so
    psi(t) = R(t) exp(-i (H(0) - omega sz / 2) t) psi(0).
    """
    a = spin_field(omega0, theta) - np.array([0.0, 0.0, 0.5 * omega])
    psi0 = spin_eigvec(omega0, theta, 0.0, omega, upper)
    out = []
    for t in times:
        rot = pauli_exp([0.0, 0.0, 0.5 * omega], t)
        out.append(rot @ pauli_exp(a, t) @ psi0)
    return np.array(out)


def rotating_frame_fidelity(omega0, omega, theta, times, upper=False):
    psi = rotating_frame_states(omega0, omega, theta, times, upper)
    return np.array([abs(np.vdot(spin_eigvec(omega0, theta, t, omega, upper), p))
                     for t, p in zip(times, psi)])


def spin_ratio(omega0, omega, theta):
    """|g_12| / omega0 = omega sin(theta) / (2 omega0)."""
    return omega * math.sin(theta) / (2 * omega0)


def spin_B(omega0, omega, theta, tau):
    return spin_ratio(omega0, omega, theta) * omega * abs(math.cos(theta)) * tau


def spin_C(omega0, omega, theta, tau):
    return spin_ratio(omega0, omega, theta) * 0.5 * omega * math.sin(theta) * tau
