from __future__ import annotations

import math

import numpy as np
import pytest

from horntube.errors import ConfigError, DivergenceError, ParameterError
from horntube.geometry import PlanarCurve, PolynomialRadius, TubeGeometry, arc_tube, cone, cylinder
from horntube.verify import observed_order
from horntube.webster import (
    LoadSeries,
    SolverConfig,
    apply_boundary,
    assemble,
    energy,
    gaussian_pulse,
    initial_state,
    resonance_frequencies,
    run,
    step,
)


def bump(center, width):
    return lambda s: np.exp(-(((np.asarray(s) - center) / width) ** 2))


def dbump(center, width):
    return lambda s: -2 * (np.asarray(s) - center) / width**2 * bump(center, width)(s)


def mode(s):
    return np.sin(np.pi * (1 - s) / 2)


def test_cylinder_operator_is_second_difference():
    cfg = SolverConfig(Ns=11)
    asm = assemble(cylinder(0.3), cfg)
    psi = np.random.default_rng(0).normal(size=11)
    h = cfg.ds
    assert np.allclose(asm.webster_operator(psi), (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / h**2)


def test_cone_operator_second_order():
    g = cone(0.2, 0.2)
    errs, hs = [], []
    for ns in (21, 41, 81):
        asm = assemble(g, SolverConfig(Ns=ns))
        s = asm.s
        exact = 2 + 2 * s * g.area_derivative(s) / g.area(s)
        errs.append(np.max(np.abs(asm.webster_operator(s**2) - exact[1:-1])))
        hs.append(1 / (ns - 1))
    assert observed_order(hs, errs) == pytest.approx(2.0, abs=0.1)


def test_torus_sound_speed():
    asm = assemble(arc_tube(1.0, 0.5), SolverConfig(Ns=11, c=2.0))
    assert np.allclose(asm.cs, 2.0 * 0.9701425001453319)


def test_zero_state_stays_zero():
    res = run(cone(0.2, 0.1), SolverConfig(Ns=41, T=0.5))
    assert np.all(res.psi == 0) and np.all(res.y == 0) and np.all(res.energy == 0)


def test_rest_gives_zero_output():
    asm = assemble(cylinder(0.2), SolverConfig(Ns=21))
    rows, y = apply_boundary(asm, initial_state(asm), 0.0)
    assert y == 0.0
    assert rows[20] == (1.0, 0.0)


def test_traveling_pulse_translates():
    cfg = SolverConfig(Ns=801, T=0.3, cfl=0.5)
    f, df = bump(0.3, 0.06), dbump(0.3, 0.06)
    res = run(cylinder(0.2), cfg, psi0=f, psi_t0=lambda s: -df(s))
    exact = f(res.s - res.final.t)
    assert np.max(np.abs(res.final.psi.values - exact)) < 2e-3


def test_outlet_reflection_inverts():
    cfg = SolverConfig(Ns=801, T=0.6, cfl=0.5)
    f, df = bump(0.6, 0.06), dbump(0.6, 0.06)
    res = run(cylinder(0.2), cfg, psi0=f, psi_t0=lambda s: -df(s))
    t = res.final.t
    exact = f(res.s - t) - f(2 - res.s - t)
    assert np.max(np.abs(res.final.psi.values - exact)) < 3e-3
    assert res.final.psi.values[np.argmin(np.abs(res.s - 0.8))] < -0.9


@pytest.mark.parametrize("ns,tol", [(201, 1e-4), (401, 1e-6)])
def test_port_absorbs_incoming_pulse(ns, tol):
    cfg = SolverConfig(Ns=ns, T=0.9, cfl=0.5)
    f, df = bump(0.5, 0.06), dbump(0.5, 0.06)
    res = run(cylinder(0.2), cfg, psi0=f, psi_t0=lambda s: df(s))
    assert res.energy[-1] < tol * res.energy[0]


def test_psi_vanishes_at_outlet():
    res = run(cone(0.2, 0.1), SolverConfig(Ns=41, T=0.5), u=gaussian_pulse(0.1, 0.05))
    assert np.all(res.psi[:, -1] == 0) and np.all(res.psi_t[:, -1] == 0)


def test_mode_energy_value():
    R, rho = 0.3, 1.2
    asm = assemble(cylinder(R), SolverConfig(Ns=401, rho=rho))
    e = energy(initial_state(asm, mode), asm)
    assert e == pytest.approx(rho * math.pi * R**2 * math.pi**2 / 16, rel=1e-5)


def test_neumann_energy_drift_second_order():
    drifts = []
    for ns in (41, 81):
        cfg = SolverConfig(Ns=ns, T=4.0, port="neumann", cfl=0.5)
        res = run(cylinder(0.2), cfg, psi0=mode)
        drifts.append(np.max(np.abs(res.energy - res.energy[0])) / res.energy[0])
    assert drifts[0] / drifts[1] > 3.0


def test_wall_loss_decay_rate():
    # psi_tt + gamma psi_t = c^2 psi_ss with gamma = 2 alpha c^2 / R
    alpha, R = 0.05, 1.0
    cfg = SolverConfig(Ns=201, T=4.0, port="neumann", alpha=alpha)
    res = run(cylinder(R), cfg, psi0=mode)
    gamma = 2 * alpha / R
    # one full period, so the exchange between kinetic and potential energy cancels
    assert res.energy[-1] / res.energy[0] == pytest.approx(math.exp(-gamma * 4.0), rel=0.02)
    assert np.all(np.diff(res.discrete_energy) <= 1e-15)


@pytest.mark.parametrize("alpha", [0.0, 0.3])
def test_port_energy_balance(alpha):
    cfg = SolverConfig(Ns=101, T=2.0, alpha=alpha)
    res = run(cone(0.2, 0.1), cfg, u=gaussian_pulse(0.2, 0.05))
    work = cfg.time_step * (res.u[1:] ** 2 - res.y[1:] ** 2)
    gap = np.diff(res.discrete_energy) - work
    assert np.max(gap) <= 1e-14
    if alpha == 0:
        assert np.max(np.abs(gap)) < 1e-14
    else:
        assert np.min(gap) < -1e-6


def test_quarter_wave_resonance():
    L, c = 0.17, 343.0
    cfg = SolverConfig(c=c, rho=1.2, Ns=101, T=0.1, length=L)
    g = cylinder(0.01 / L)
    asm = assemble(g, cfg)
    res = run(g, cfg, u=gaussian_pulse(5e-4, 1e-4), asm=asm)
    f1 = resonance_frequencies(res, asm, n_peaks=1)[0]
    assert f1 == pytest.approx(c / (4 * L), rel=0.03)


def test_cfl_violation_rejected():
    with pytest.raises(ConfigError):
        assemble(cylinder(0.2), SolverConfig(Ns=41, cfl=1.2))
    with pytest.raises(ConfigError):
        assemble(cylinder(0.2), SolverConfig(Ns=41, dt=0.05))


def test_divergence_reports_step():
    cfg = SolverConfig(Ns=21, T=0.2)
    asm = assemble(cylinder(0.2), cfg)
    state = initial_state(asm)
    state = step(asm, state, 0.0)
    with pytest.raises(DivergenceError) as info:
        step(asm, state, 0.0, loads=lambda t: np.full(21, np.inf))
    assert info.value.step == 2


def test_bad_parameters():
    with pytest.raises(ParameterError):
        SolverConfig(alpha=-1.0)
    with pytest.raises(ParameterError):
        SolverConfig(port="open")
    asm = assemble(cylinder(0.2), SolverConfig(Ns=21))
    with pytest.raises(ParameterError):
        initial_state(asm, psi0=lambda s: 1 + 0 * s)


def test_load_series_interpolates():
    ls = LoadSeries([0.0, 1.0], np.array([[0.0, 2.0], [1.0, 4.0]]))
    assert np.allclose(ls(0.25), [0.25, 2.5])
    with pytest.raises(ValueError):
        ls(1.5)


def test_mode_convergence_order():
    hs, errs = [], []
    for ns in (41, 81, 161):
        cfg = SolverConfig(Ns=ns, T=1.0, port="neumann", cfl=0.5)
        res = run(cylinder(0.2), cfg, psi0=mode)
        exact = mode(res.s) * np.cos(math.pi / 2 * res.final.t)
        errs.append(np.max(np.abs(res.final.psi.values - exact)))
        hs.append(cfg.ds)
    assert observed_order(hs, errs) == pytest.approx(2.0, abs=0.3)


def test_length_scaling():
    cfg = SolverConfig(c=343.0, length=0.17, Ns=21)
    assert cfg.c_eff == pytest.approx(343.0 / 0.17)
    assert SolverConfig(alpha=0.5, length=0.2).alpha_eff == pytest.approx(0.1)


def test_curved_tube_runs_passively():
    g = TubeGeometry(PlanarCurve((0.0, 0.0, 1.2)), PolynomialRadius((0.15, 0.0, 0.1)))
    cfg = SolverConfig(Ns=81, T=1.5, alpha=0.2)
    res = run(g, cfg, u=gaussian_pulse(0.2, 0.05))
    work = cfg.time_step * (res.u[1:] ** 2 - res.y[1:] ** 2)
    assert np.max(np.diff(res.discrete_energy) - work) <= 1e-14
