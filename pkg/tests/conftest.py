import math
import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adiabatic_audit import (SpinHalfParams, TimeGrid, build_smooth_random, build_spin_half,
                             eigen_flow)

ACCEPTANCE_LINES = []

SPIN_THETAS = (0.0, math.pi / 6, math.pi / 3, math.pi / 2)
SPIN_RATIOS = (1e-3, 1e-2, 1e-1)
OMEGA0 = 10.0


def corpus_cases():
    """(label, model, grid, n): 12 rotating spins and 8 random 3/4-level models."""
    cases = []
    tau = 50.0
    for theta in SPIN_THETAS:
        for ratio in SPIN_RATIOS:
            p = SpinHalfParams(OMEGA0, ratio * OMEGA0, theta)
            label = f"spin(theta={theta:.4f},w/w0={ratio:g})"
            cases.append((label, build_spin_half(p, tau), TimeGrid(tau, 20000), 0))
    for dim in (3, 4):
        for seed in range(4):
            model = build_smooth_random(dim, seed, 30.0, amplitude=0.6, rate=1.0)
            cases.append((f"random(dim={dim},seed={seed})", model, TimeGrid(30.0, 20000),
                          seed % dim))
    return cases


@lru_cache(maxsize=None)
def corpus():
    return tuple((label, model, grid, n, eigen_flow(model, grid))
                 for label, model, grid, n in corpus_cases())


@lru_cache(maxsize=None)
def spin_flow(omega0, omega, theta, tau, steps):
    model = build_spin_half(SpinHalfParams(omega0, omega, theta), tau)
    grid = TimeGrid(tau, steps)
    return model, grid, eigen_flow(model, grid)


@pytest.fixture(scope="session")
def spin_pi3():
    """Rotating spin omega0=10, omega=0.1, theta=pi/3 on [0, 100]."""
    return spin_flow(10.0, 0.1, math.pi / 3, 100.0, 40000)


@pytest.fixture(scope="session")
def spin_pi2():
    """Rotating spin omega0=10, omega=0.1, theta=pi/2 on [0, 100]."""
    return spin_flow(10.0, 0.1, math.pi / 2, 100.0, 40000)


def record_acceptance(name, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
