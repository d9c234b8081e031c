import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import pauli_exp, spin_field
from adiabatic_audit import (FormatError, MatrixSampleTable, ParameterError, SpinHalfParams,
                             TimeGrid, build_constant, build_counterexample_b,
                             build_smooth_random, build_spin_half, load_sample_table, rescale,
                             write_sample_table)
from adiabatic_audit.hamiltonians import hermiticity_defect, parse_sample_table

thetas = st.floats(0.0, math.pi)
rates = st.floats(1e-3, 2.0)


@given(theta=thetas, omega=rates, t=st.floats(0.0, 100.0))
def test_spin_hermitian(theta, omega, t):
    model = build_spin_half(SpinHalfParams(10.0, omega, theta), 100.0)
    assert hermiticity_defect(model.evaluate(t)) <= 1e-12


@given(theta=thetas, omega=rates, t=st.floats(0.0, 50.0))
def test_spin_matches_rotated_field(theta, omega, t):
    # H(t) = R H(0) R^dagger with R = exp(-i omega t sz / 2)
    model = build_spin_half(SpinHalfParams(10.0, omega, theta), 50.0)
    a = spin_field(10.0, theta)
    h0 = a[0] * np.array([[0, 1], [1, 0]]) + a[2] * np.diag([1.0, -1.0])
    rot = pauli_exp([0.0, 0.0, 0.5 * omega], t)
    assert np.allclose(model.evaluate(t), rot @ h0 @ rot.conj().T, atol=1e-12)


def test_spin_spectrum_is_constant():
    model = build_spin_half(SpinHalfParams(10.0, 0.1, math.pi / 3), 100.0)
    vals = np.linalg.eigvalsh(model.sample(np.linspace(0, 100, 50)))
    assert np.allclose(vals, [-5.0, 5.0], atol=1e-12)


@pytest.mark.parametrize("kind", ["spin", "random"])
def test_derivative_matches_central_difference(kind):
    if kind == "spin":
        model = build_spin_half(SpinHalfParams(10.0, 0.7, 1.1), 20.0)
    else:
        model = build_smooth_random(4, 3, 20.0)
    t = np.linspace(1.0, 19.0, 7)
    errs = []
    for h in (1e-2, 5e-3):
        fd = (model.evaluate(t + h) - model.evaluate(t - h)) / (2 * h)
        errs.append(np.max(np.abs(fd - model.derivative(t))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_random_model_properties():
    model = build_smooth_random(3, 7, 10.0)
    h = model.sample(np.linspace(0, 10, 20))
    assert hermiticity_defect(h) <= 1e-12
    assert np.allclose(np.trace(h, axis1=1, axis2=2), 0.0, atol=1e-12)
    again = build_smooth_random(3, 7, 10.0)
    assert np.array_equal(again.evaluate(3.3), model.evaluate(3.3))


def test_domain_is_enforced():
    model = build_spin_half(SpinHalfParams(10.0, 0.1, 0.5), 10.0)
    with pytest.raises(ParameterError):
        model.evaluate(10.5)
    with pytest.raises(ParameterError):
        model.check_grid(TimeGrid(11.0, 100))


@pytest.mark.parametrize("args", [(0.0, 0.1, 0.5), (-1.0, 0.1, 0.5), (10.0, -0.1, 0.5),
                                  (10.0, 0.1, 4.0), (10.0, math.nan, 0.5)])
def test_spin_parameter_errors(args):
    with pytest.raises(ParameterError):
        SpinHalfParams(*args)


def test_time_grid():
    grid = TimeGrid(2.0, 4)
    assert np.allclose(grid.points, [0, 0.5, 1, 1.5, 2])
    assert grid.step == 0.5
    assert len(grid.refined(2)) == 9
    with pytest.raises(ParameterError):
        TimeGrid(1.0, 0)


def test_constant_model():
    m = np.array([[1.0, 0.5j], [-0.5j, -1.0]])
    model = build_constant(m, 5.0)
    assert np.allclose(model.evaluate([0.0, 5.0]), m)
    assert np.allclose(model.derivative(2.0), 0.0)
    with pytest.raises(ParameterError):
        build_constant(np.array([[0, 1], [0, 0]]), 1.0)


@given(T1=st.floats(0.1, 10.0), T2=st.floats(0.1, 10.0), s=st.floats(0.0, 1.0))
def test_rescale_composition(T1, T2, s):
    base = build_spin_half(SpinHalfParams(10.0, 0.3, 0.8), 1.0)
    # rescale(b, T1) on [0, T1], reparametrised back to the unit interval
    inner = rescale(rescale(base, T1), 1.0 / T1)
    nested = rescale(inner, T1 * T2)
    direct = rescale(base, T1 * T2)
    t = s * T1 * T2
    assert np.max(np.abs(nested.evaluate(t) - direct.evaluate(t))) <= 1e-12


def test_rescale_derivative_factor():
    base = build_spin_half(SpinHalfParams(10.0, 0.3, 0.8), 1.0)
    model = rescale(base, 4.0)
    assert model.t_max == 4.0
    assert np.allclose(model.derivative(2.0), base.derivative(0.5) / 4.0)
    with pytest.raises(ParameterError):
        rescale(base, 0.0)


def _spin_table(n=1000, tmax=10.0):
    model = build_spin_half(SpinHalfParams(10.0, 0.4, 1.0), tmax)
    times = np.linspace(0.0, tmax, n)
    return model, times, model.sample(times)


def test_table_round_trip():
    _, times, mats = _spin_table(20)
    text = write_sample_table(times, mats)
    table = parse_sample_table(text)
    assert np.array_equal(table.times, times)
    assert np.array_equal(table.matrices, mats)


def test_table_interpolation_at_midpoints():
    model, times, mats = _spin_table()
    interp = load_sample_table(write_sample_table(times, mats).encode())
    mid = 0.5 * (times[:-1] + times[1:])
    assert np.max(np.abs(interp.evaluate(mid) - model.evaluate(mid))) <= 1e-6


def test_table_from_binary_stream(tmp_path):
    _, times, mats = _spin_table(10)
    buf = io.BytesIO()
    write_sample_table(times, mats, buf)
    buf.seek(0)
    assert load_sample_table(buf).dimension == 2
    path = tmp_path / "h.txt"
    path.write_text(write_sample_table(times, mats))
    assert load_sample_table(str(path)).t_max == pytest.approx(times[-1])


@pytest.mark.parametrize("text, fragment", [
    ("", "empty"),
    ("N 2 SAMPLE 1\n", "header"),
    ("N 2 SAMPLES 1\nt 0\n1,0 0,0\n", "blocks"),
    ("N 1 SAMPLES 1\nx 0\n1,0\n", "t <time>"),
    ("N 1 SAMPLES 1\nt 0\n1;0\n", "re,im"),
    ("N 1 SAMPLES 1\nt 0\n1,a\n", "complex"),
    ("N 2 SAMPLES 1\nt 0\n1,0\n0,0 1,0\n", "entries"),
])
def test_table_format_errors(text, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_sample_table(text)


def test_table_rejects_non_hermitian_and_unsorted():
    good = np.array([np.eye(2), np.eye(2)], dtype=complex)
    bad = good.copy()
    bad[1, 0, 1] = 1e-6
    with pytest.raises(FormatError, match="t = 1.0"):
        MatrixSampleTable(np.array([0.0, 1.0]), bad)
    with pytest.raises(FormatError):
        MatrixSampleTable(np.array([1.0, 0.0]), good)
    tiny = good.copy()
    tiny[1, 0, 1] = 1e-13
    MatrixSampleTable(np.array([0.0, 1.0]), tiny)


def test_counterexample_partner():
    base = build_spin_half(SpinHalfParams(10.0, 0.1, math.pi / 2), 10.0)
    grid = TimeGrid(10.0, 4000)
    hb = build_counterexample_b(base, grid)
    t = grid.points[::500]
    assert hermiticity_defect(hb.sample(t)) <= 1e-12
    # -U^dagger H U has the spectrum of -H
    assert np.allclose(np.linalg.eigvalsh(hb.sample(t)), [-5.0, 5.0], atol=1e-8)
    assert np.allclose(hb.evaluate(0.0), -base.evaluate(0.0), atol=1e-14)
