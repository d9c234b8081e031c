import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import spin_flow
from oracles import rotating_frame_fidelity
from adiabatic_audit import (AccuracyError, ParameterError, SpinHalfParams, TimeGrid, audit,
                             build_constant, build_counterexample_b, build_smooth_random,
                             build_spin_half, eigen_flow, evolution_to_csv, evolve_coefficients,
                             evolve_state, geometric_phase_spin, integral_form_residual,
                             propagator, spin_berry_phase, verify_bound)
from adiabatic_audit.dynamics import chain_products, dynamical_phases, rk4_step_matrices

H3 = np.array([[1.0, 0.3, 0.0], [0.3, -0.5, 0.2j], [0.0, -0.2j, 0.2]])


def test_constant_propagator_matches_expm():
    grid = TimeGrid(5.0, 2000)
    u = propagator(build_constant(H3, 5.0), grid)
    assert np.array_equal(u[0], np.eye(3))
    for k in (0, 700, 2000):
        assert np.max(np.abs(u[k] - expm(-1j * H3 * grid.points[k]))) < 1e-8


def test_propagator_composition():
    model = build_smooth_random(3, 2, 4.0)
    coarse = propagator(model, TimeGrid(4.0, 2000))
    fine = propagator(model, TimeGrid(4.0, 4000))
    assert np.max(np.abs(coarse - fine[::2])) < 1e-8
    # U(t2) = U(t2 <- t1) U(t1) with the step operator from the fine grid
    k1, k2 = 1000, 3000
    step = fine[k2] @ fine[k1].conj().T
    assert np.max(np.abs(step @ fine[k1] - fine[k2])) < 1e-8


def test_propagator_unitarity_error():
    model = build_spin_half(SpinHalfParams(10.0, 0.1, 1.0), 100.0)
    with pytest.raises(AccuracyError, match="finer grid"):
        propagator(model, TimeGrid(100.0, 1000))


def test_chain_products_match_sequential():
    rng = np.random.default_rng(0)
    steps = rng.normal(size=(13, 3, 3)) + 1j * rng.normal(size=(13, 3, 3))
    prods = chain_products(steps)
    acc = np.eye(3, dtype=complex)
    assert np.array_equal(prods[0], acc)
    for k in range(13):
        acc = steps[k] @ acc
        assert np.allclose(prods[k + 1], acc, rtol=1e-12, atol=1e-12)


def test_rk4_step_order():
    a = -1j * H3
    exact = expm(a * 0.1)
    for h, tol in ((0.1, 1e-5), (0.05, 1e-6)):
        step = rk4_step_matrices(a[None], a[None], a[None], h)[0]
        assert np.max(np.abs(step - expm(a * h))) < tol
    assert exact.shape == (3, 3)


def test_constant_h_fidelity_is_one():
    model = build_constant(H3, 10.0)
    grid = TimeGrid(10.0, 5000)
    for n in range(3):
        evo = evolve_state(model, grid, n)
        assert np.max(np.abs(evo.fidelity - 1.0)) < 1e-10
        assert np.array_equal(evo.coefficients[0], np.eye(3)[n])


def test_decoupled_coefficients():
    flow = eigen_flow(build_constant(H3, 10.0), TimeGrid(10.0, 1000))
    evo = evolve_coefficients(flow, 1)
    assert np.max(np.abs(evo.coefficients - np.eye(3)[1])) < 1e-14


def test_rotating_frame_fidelity(spin_pi2):
    model, grid, flow = spin_pi2
    evo = evolve_state(model, grid, 0, flow=flow)
    exact = rotating_frame_fidelity(10.0, 0.1, math.pi / 2, grid.points)
    assert np.max(np.abs(evo.fidelity - exact)) < 1e-6
    assert evo.error_estimate < 1e-6
    assert evo.norm_drift < 1e-8


def test_upper_level_rotating_frame():
    model, grid, flow = spin_flow(10.0, 0.1, math.pi / 2, 100.0, 40000)
    evo = evolve_state(model, grid, 1, flow=flow, estimate_error=False)
    exact = rotating_frame_fidelity(10.0, 0.1, math.pi / 2, grid.points, upper=True)
    assert np.max(np.abs(evo.fidelity - exact)) < 1e-6


def test_norm_and_initial_coefficients(spin_pi3):
    model, grid, flow = spin_pi3
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    norms = np.sum(np.abs(evo.coefficients) ** 2, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-8
    assert evo.coefficients[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_two_routes_and_residual(spin_pi3):
    model, grid, flow = spin_pi3
    state = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    direct = evolve_coefficients(flow, 0)
    assert np.max(np.abs(state.coefficients - direct.coefficients)) < 1e-6
    assert np.max(np.abs(integral_form_residual(flow, state))) < 1e-6


def test_residual_converges_with_grid():
    model = build_smooth_random(3, 1, 20.0, amplitude=0.6, rate=1.0)
    res = []
    for steps in (2000, 4000):
        grid = TimeGrid(20.0, steps)
        flow = eigen_flow(model, grid)
        res.append(np.max(np.abs(integral_form_residual(flow, evolve_state(
            model, grid, 0, flow=flow, estimate_error=False)))))
    assert res[0] / res[1] > 4.0


def test_fidelity_converges_under_halving():
    model = build_smooth_random(3, 3, 20.0, amplitude=0.6, rate=1.0)
    f = [evolve_state(model, TimeGrid(20.0, s), 0, estimate_error=False).fidelity[::s // 1000]
         for s in (1000, 2000, 4000)]
    e1, e2 = np.max(np.abs(f[0] - f[2])), np.max(np.abs(f[1] - f[2]))
    assert e1 / e2 > 4.0


def test_evolve_rejects_coarse_grid():
    model = build_spin_half(SpinHalfParams(10.0, 0.1, 1.0), 100.0)
    with pytest.raises(AccuracyError):
        evolve_state(model, TimeGrid(100.0, 4000), 0)
    with pytest.raises(ParameterError):
        evolve_state(model, TimeGrid(100.0, 40000), 2)


@settings(max_examples=10, deadline=None)
@given(phases=st.lists(st.floats(0.0, 2 * math.pi), min_size=3, max_size=3))
def test_fidelity_gauge_invariant(phases):
    model = build_smooth_random(3, 0, 5.0, amplitude=0.6, rate=1.0)
    grid = TimeGrid(5.0, 1000)
    ref = evolve_state(model, grid, 0, estimate_error=False)
    flow = eigen_flow(model, grid, phase_offsets=np.exp(1j * np.array(phases)))
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    assert np.max(np.abs(evo.fidelity - ref.fidelity)) <= 1e-12


def test_dynamical_phases_exact_for_linear_energy():
    def matrix(t):
        t = np.asarray(t, dtype=float)
        h = np.zeros(t.shape + (2, 2), dtype=complex)
        h[..., 0, 0] = -1.0 - 0.2 * t
        h[..., 1, 1] = 1.0 + 0.3 * t ** 2
        return h
    model = type(build_constant(np.eye(2), 1.0))("ramp", 2, 4.0, matrix)
    grid = TimeGrid(4.0, 40)
    phases = dynamical_phases(eigen_flow(model, grid))
    t = grid.points
    assert np.allclose(phases[:, 0], -t - 0.1 * t ** 2, atol=1e-12)
    assert np.allclose(phases[:, 1], t + 0.1 * t ** 3, atol=1e-12)


def test_bound_verdicts(spin_pi3):
    model, grid, flow = spin_pi3
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    rep = audit(flow, 0)
    verdict = verify_bound(evo, rep)
    assert verdict.passed
    assert np.max(evo.infidelity) < 1e-3 * rep.bound_curve[-1]
    constant = build_constant(H3, 5.0)
    cgrid = TimeGrid(5.0, 2000)
    cflow = eigen_flow(constant, cgrid)
    cverdict = verify_bound(evolve_state(constant, cgrid, 0, flow=cflow), audit(cflow, 0))
    assert cverdict.passed
    assert abs(cverdict.worst_margin) < 1e-10


def test_bound_verdict_can_fail():
    model = build_smooth_random(3, 1, 30.0, amplitude=0.6, rate=1.0)
    grid = TimeGrid(30.0, 20000)
    flow = eigen_flow(model, grid)
    evo = evolve_state(model, grid, 1, flow=flow, estimate_error=False)
    rep = audit(flow, 1)
    assert verify_bound(evo, rep).passed
    k = int(np.argmax(evo.infidelity / np.maximum(rep.bound_curve, 1e-300)))
    ratio = evo.infidelity[k] / rep.bound_curve[k]

    class Shrunk:
        bound_curve = rep.bound_curve * 0.5 * ratio
        times = rep.times
        n_index = rep.n_index

    assert not verify_bound(evo, Shrunk(), slack=0.0).passed


def test_bound_verdict_grid_mismatch(spin_pi3):
    model, grid, flow = spin_pi3
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    other = eigen_flow(model, TimeGrid(100.0, 20000))
    with pytest.raises(ParameterError):
        verify_bound(evo, audit(other, 0))
    with pytest.raises(ParameterError):
        verify_bound(evo, audit(flow, 1))


def test_counterexample_dynamics():
    base = build_spin_half(SpinHalfParams(10.0, 0.1, math.pi / 2), 50.0)
    grid = TimeGrid(50.0, 20000)
    hb = build_counterexample_b(base, grid)
    fa, fb = eigen_flow(base, grid), eigen_flow(hb, grid)
    assert np.max(np.abs(np.abs(fa.couplings) - np.abs(fb.couplings))) < 1e-6
    # H^b = -U^dagger H^a U reverses the level order: b-level n is a-level 1 - n.
    # d/dt arg g^b_nm = d/dt arg g^a_{n'm'} + (E^a_n' - E^a_m')
    for n, m in ((0, 1), (1, 0)):
        na, ma = 1 - n, 1 - m
        rate_a = np.gradient(np.unwrap(np.angle(fa.couplings[:, na, ma])), grid.step)
        rate_b = np.gradient(np.unwrap(np.angle(fb.couplings[:, n, m])), grid.step)
        shift = fa.energies[:, na] - fa.energies[:, ma]
        assert np.max(np.abs(rate_b - rate_a - shift)[5:-5]) < 1e-3
    ea = evolve_state(base, grid, 0, flow=fa, estimate_error=False)
    eb = evolve_state(hb, grid, 0, flow=fb, estimate_error=False)
    assert ea.fidelity[-1] > 0.99
    assert eb.fidelity[-1] < 0.9


def test_geometric_phase_formula():
    p = SpinHalfParams(10.0, 0.1, math.pi / 3)
    rep = geometric_phase_spin(p, 2 * math.pi / 0.1, 40000)
    assert rep.periods == 1
    assert abs(rep.delta_gamma - rep.delta_gamma_formula) < 0.3 * abs(rep.delta_gamma_formula)
    assert rep.gamma_adiabatic == pytest.approx(rep.gamma_solid_angle, abs=1e-6)
    assert -math.pi < rep.gamma_exact <= math.pi


@pytest.mark.parametrize("branch, sign", [(0, -1.0), (1, 1.0)])
def test_berry_phase_sign(branch, sign):
    p = SpinHalfParams(10.0, 0.1, 0.7)
    expected = sign * math.pi * (1 - math.cos(0.7))
    assert spin_berry_phase(p, 1, branch) == pytest.approx(expected)
    rep = geometric_phase_spin(p, 2 * math.pi / 0.1, 20000, branch=branch)
    assert rep.gamma_adiabatic == pytest.approx(expected, abs=1e-6)


def test_geometric_phase_vanishes_at_theta_zero():
    rep = geometric_phase_spin(SpinHalfParams(10.0, 0.1, 0.0), 2 * math.pi / 0.1, 20000)
    for value in (rep.gamma_adiabatic, rep.gamma_exact, rep.delta_gamma, rep.delta_gamma_formula):
        assert abs(value) < 1e-6


def test_geometric_phase_needs_whole_periods():
    p = SpinHalfParams(10.0, 0.1, 1.0)
    with pytest.raises(ParameterError):
        geometric_phase_spin(p, 50.0, 10000)
    with pytest.raises(ParameterError):
        geometric_phase_spin(SpinHalfParams(10.0, 0.0, 1.0), 50.0, 10000)


def test_evolution_csv(spin_pi3):
    model, grid, flow = spin_pi3
    evo = evolve_state(model, grid, 0, flow=flow, estimate_error=False)
    text = evolution_to_csv(evo, audit(flow, 0).bound_curve)
    lines = text.splitlines()
    assert lines[0] == "t,re_c_1,im_c_1,re_c_2,im_c_2,F,one_minus_F,bound_rhs"
    assert len(lines) == len(grid.points) + 1
