from __future__ import annotations

import numpy as np
import pytest
import sympy as sp

import horntube.manufactured as mf
from horntube.errors import AlignmentError, PreconditionError, TestFunctionError
from horntube.fieldops import integrate_disk
from horntube.geometry import (
    LineCurve,
    PlanarCurve,
    PolynomialRadius,
    TubeGeometry,
    arc_tube,
    cone,
    curvature_factor,
    cylinder,
)
from horntube.verify import (
    Bump,
    ResidualReport,
    _threads,
    boundary_equivalence,
    bump_family,
    convergence_study,
    integrated_balance,
    observed_order,
    tracking_error,
    tracking_run,
    weak_residual,
)
from horntube.webster import SolverConfig

CURVED = TubeGeometry(PlanarCurve((0.4, 1.1, -0.8)), PolynomialRadius((0.2, 0.05, 0.03)))


def test_observed_order_exact_power():
    h = np.array([0.1, 0.05, 0.025])
    assert observed_order(h, 3 * h**2) == pytest.approx(2.0)


def test_report_requires_refinement():
    with pytest.raises(ValueError):
        ResidualReport.from_levels("x", [0.1, 0.2, 0.05], [1, 2, 3])


def test_report_pass_logic():
    rep = ResidualReport.from_levels("x", [0.1, 0.05, 0.025], [4e-2, 1e-2, 2.5e-3], tolerance=1e-2, min_order=1.9)
    assert rep.passed and rep.monotone
    assert "pass" in rep.summary()
    rep = ResidualReport.from_levels("x", [0.1, 0.05, 0.025], [4e-2, 1e-2, 2.5e-3], tolerance=1e-3)
    assert not rep.passed and "FAIL" in rep.summary()


def test_balance_plane_wave_straight():
    res = integrated_balance(mf.plane_wave(cylinder(0.2), 1.0), 0.2, 0.7, 0.3)
    assert abs(res.L) < 1e-10 and abs(res.rhs) < 1e-10 and abs(res.defect) < 1e-10


@pytest.mark.parametrize("s0,s1", [(0.0, 1.0), (0.1, 0.4), (0.35, 0.9)])
def test_balance_exact_solution_on_cone(s0, s1):
    res = integrated_balance(mf.spherical_wave(cone(0.2, 0.2), 1.0), s0, s1, 0.4)
    assert abs(res.L) < 1e-8 and abs(res.defect) < 1e-8


def test_balance_curved_compensated_converges():
    ms = mf.generic_smooth(CURVED, 1.0, seed=3)
    ns = [8, 16, 32, 64]
    defects = [abs(integrated_balance(ms, 0.1, 0.9, 0.3, ns=n, rule="trapezoid").defect) for n in ns]
    assert observed_order([1 / n for n in ns], defects) >= 2.0 - 0.1
    assert abs(integrated_balance(ms, 0.1, 0.9, 0.3).defect) < 1e-10


def test_balance_tag_checked():
    with pytest.raises(PreconditionError):
        integrated_balance(mf.generic_smooth(CURVED, 1.0), 0.1, 0.9, 0.3, compensate=False)
    with pytest.raises(PreconditionError):
        integrated_balance(mf.plane_wave(cylinder(0.2), 1.0), 0.1, 0.9, 0.3, c=2.0)


def test_bump_is_compactly_supported_and_smooth():
    b = Bump(0.25, 0.75, power=4)
    assert b(0.25) == 0 and b(0.75) == 0 and b(0.5) == 1
    x = np.linspace(0.3, 0.7, 5)
    h = 1e-6
    assert np.allclose(b.derivative(x), (b(x + h) - b(x - h)) / (2 * h), atol=1e-8)


def test_bump_family_snapped_inside():
    fam = bump_family(0.0, 1.0)
    assert len(fam) == 5
    for b in fam:
        assert 0 < b.lo < b.hi < 1
        assert (b.lo * 16) == pytest.approx(round(b.lo * 16))


def test_weak_plane_wave_trivial():
    rep = weak_residual(mf.plane_wave(cylinder(0.2), 1.0), 1.0, levels=(129, 257, 513, 1025))
    assert rep.final < 1e-9
    assert rep.details["sides"][-1] < 1e-9


def test_weak_cone_exact_solution():
    rep = weak_residual(mf.spherical_wave(cone(0.2, 0.1), 1.0), 1.0, tolerance=1e-6, min_order=2.0)
    assert rep.passed and rep.monotone


def test_weak_curved_compensated():
    ms = mf.generic_smooth(arc_tube(0.9, 0.3), 1.0)
    rep = weak_residual(ms, 1.0, levels=(33, 65, 129), tolerance=1e-3, min_order=2.0)
    assert rep.passed


def test_weak_rejects_boundary_touching_support():
    phi = mf.plane_wave(cylinder(0.2), 1.0)
    with pytest.raises(TestFunctionError):
        weak_residual(phi, 1.0, levels=(33, 65, 129), s_bumps=[Bump(0.0, 0.5)])
    with pytest.raises(TestFunctionError):
        weak_residual(phi, 1.0, levels=(33, 65, 129), t_bumps=[Bump(0.5, 1.0)])


def test_boundary_plane_wave_cylinder():
    rep = boundary_equivalence(mf.plane_wave(cylinder(0.2), 1.0), np.linspace(0.05, 0.95, 5))
    assert rep.defect < 1e-10
    assert np.all(rep.K == 0)
    assert rep.strict


def test_boundary_inlet_flat_axisymmetric():
    g = TubeGeometry(LineCurve(), PolynomialRadius((0.2, 0.0, 0.1)))
    phi = mf.ManufacturedSolution((1 - mf.s) * sp.cos(np.pi * mf.s - 2 * mf.t) * (1 + 0.3 * mf.r**2), g, 1.0)
    rep = boundary_equivalence(phi, np.linspace(0.05, 0.95, 5))
    assert rep.strict and rep.defect < 1e-8


def test_boundary_K_two_paths_on_cone():
    rep = boundary_equivalence(mf.generic_smooth(cone(0.2, 0.15), 1.0), np.linspace(0.1, 0.9, 4))
    assert not rep.strict
    assert np.max(np.abs(rep.K)) > 1e-3
    assert rep.k_consistency < 1e-10


def test_boundary_reports_xi_correction_when_curved_at_inlet():
    rep = boundary_equivalence(mf.generic_smooth(CURVED, 1.0), [0.3])
    assert abs(rep.xi_correction[0]) > 0
    assert rep.defect < 1e-8


def test_tracking_alignment_error():
    phi = mf.dirichlet_mode(cylinder(0.2), 1.0)
    res = tracking_run(phi, SolverConfig(Ns=21, T=0.2), with_loads=False)
    res.psi = res.psi[:-1]
    with pytest.raises(AlignmentError):
        tracking_error(res, phi)


def test_tracking_needs_matching_parameters():
    with pytest.raises(PreconditionError):
        tracking_run(mf.dirichlet_mode(cylinder(0.2), 1.0), SolverConfig(Ns=21, T=0.2, c=2.0))


def test_tracking_mode_is_accurate():
    phi = mf.dirichlet_mode(cylinder(0.2), 1.0)
    err = tracking_error(tracking_run(phi, SolverConfig(Ns=81, T=1.0, cfl=0.5), with_loads=False), phi)
    assert err.linf < 1e-4 and err.l2 <= err.linf


def test_convergence_study_levels():
    rep = convergence_study(lambda n: 1.0 / (n - 1) ** 2, [11, 21, 41, 81])
    assert rep.order == pytest.approx(2.0)
    rep = convergence_study(lambda lv: 1.0 / (lv["Ns"] - 1), [{"Ns": 11}, {"Ns": 21}, {"Ns": 41}])
    assert rep.order == pytest.approx(1.0)
    with pytest.raises(ValueError):
        convergence_study(lambda n: 1.0, [11, 21])


def test_convergence_study_flags_non_monotone():
    vals = {11: 1e-2, 21: 2e-2, 41: 1e-4}
    rep = convergence_study(vals.get, [11, 21, 41])
    assert not rep.monotone
    assert "non-monotone" in rep.summary()


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("HORNTUBE_THREADS", "1")
    assert _threads() == 1
    monkeypatch.setenv("HORNTUBE_THREADS", "3")
    assert _threads() == 3


@pytest.mark.parametrize("nr", [2, 3, 6])
def test_sigma_quadrature_exact(nr):
    g = arc_tube(0.9, 0.6)
    eta = 0.9 * 0.6
    val = integrate_disk(lambda s, r, th: curvature_factor(g, s, r, th) ** -2, g, np.array([0.5]), nr, 8)
    assert val[0] / g.area(0.5) == pytest.approx(1 + eta**2 / 4, rel=1e-13)
