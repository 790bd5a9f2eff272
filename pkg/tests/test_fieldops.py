from __future__ import annotations

import numpy as np
import pytest

from horntube.errors import CapabilityError, DegenerateWallError, DomainError
from horntube.fieldops import (
    AnalyticField,
    Disk,
    Quadrature,
    SampledField,
    TubeGrid,
    Volume,
    Wall,
    WallTrace,
    end_normal_derivative,
    grad_inv_xi,
    integrate,
    integrate_disk,
    integrate_volume,
    theta_nodes,
    tube_gradient,
    wall_normal_derivative,
)
from horntube.geometry import (
    PlanarCurve,
    PolynomialRadius,
    TubeGeometry,
    arc_tube,
    cone,
    curvature_factor,
    cylinder,
    frenet_frame,
    from_cartesian,
    to_cartesian,
)
from horntube.manufactured import generic_smooth

CURVED = TubeGeometry(PlanarCurve((0.4, 1.1, -0.8)), PolynomialRadius((0.2, 0.05, 0.03)))


def zero(s, r, th, t=0.0):
    return 0.0 * (s + r + th)


def one(s, r, th, t=0.0):
    return 1.0 + 0.0 * (s + r + th)


def field_s():
    return AnalyticField(value=lambda s, r, th, t=0.0: s + 0 * r, ds=one, dr=zero, dth=zero, name="s")


def test_grid_weights():
    g = TubeGrid(cylinder(0.7), ns=5, nr=6, ntheta=12)
    _, wth = g.theta
    assert np.sum(wth) == pytest.approx(2 * np.pi)
    rho, wr = g.unit_r
    assert np.all((rho > 0) & (rho < 1))
    assert np.sum(rho * wr) == pytest.approx(0.5, rel=1e-15)


def test_gradient_of_s_straight():
    d = tube_gradient(field_s(), cylinder(0.2), 0.4, 0.1, 0.7)
    assert np.allclose(d, (1, 0, 0))


def test_gradient_of_normal_coordinate():
    f = AnalyticField(value=lambda s, r, th, t=0.0: r * np.cos(th), ds=zero,
                      dr=lambda s, r, th, t=0.0: np.cos(th) + 0 * r,
                      dth=lambda s, r, th, t=0.0: -r * np.sin(th), name="n-coord")
    th = np.linspace(0, 2 * np.pi, 9)
    d1, d2, d3 = tube_gradient(f, arc_tube(0.5, 0.3), 0.3, 0.15, th)
    assert np.allclose(d1, 0) and np.allclose(d2, 1) and np.allclose(d3, 0, atol=1e-15)


def test_gradient_missing_channel():
    f = AnalyticField(value=one, ds=zero, name="partial")
    with pytest.raises(CapabilityError):
        tube_gradient(f, cylinder(0.2), 0.3, 0.1, 0.0)


def _cartesian_fd_gradient(fun, x, h=1e-5):
    out = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(out, axis=-1)


@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_cartesian_fd(seed):
    ms = generic_smooth(CURVED, 1.0, seed=seed)
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.1, 0.9, 5)
    r = CURVED.R(s) * rng.uniform(0.2, 0.8, 5)
    th = rng.uniform(0, 2 * np.pi, 5)
    t0 = 0.3
    x = to_cartesian(CURVED, s, r, th)

    def fun(xx):
        ss, rr, tt = from_cartesian(CURVED, xx, s_guess=s)
        return ms.field(ss, rr, tt, t0)

    grad = _cartesian_fd_gradient(fun, x)
    tv, nv, bv, _, _ = frenet_frame(CURVED.centerline, s)
    # the signed-curvature frame differs from the Frenet frame only by the sign of n and b
    n_signed, b_signed = CURVED.centerline.normal(s), CURVED.centerline.binormal(s)
    d1, d2, d3 = tube_gradient(ms.field, CURVED, s, r, th, t0)
    comp = np.stack([np.sum(grad * tv, -1), np.sum(grad * n_signed, -1), np.sum(grad * b_signed, -1)], -1)
    ours = np.stack([d1, d2, d3], -1)
    assert np.max(np.abs(comp - ours)) / np.max(np.abs(ours)) < 1e-6


def test_grad_inv_xi_examples():
    d = grad_inv_xi(cylinder(0.3), 0.5, 0.1, 1.0)
    assert np.allclose(d, 0)
    d = grad_inv_xi(arc_tube(0.5, 0.3), 0.5, 0.1, 1.0)
    assert np.allclose(d, (0, -0.5, 0))


def test_grad_inv_xi_matches_tube_gradient():
    g = CURVED
    inv_xi = AnalyticField(
        value=lambda s, r, th, t=0.0: 1 / curvature_factor(g, s, r, th),
        ds=lambda s, r, th, t=0.0: -r * g.dkappa(s) * np.cos(th),
        dr=lambda s, r, th, t=0.0: -g.kappa(s) * np.cos(th) + 0 * r,
        dth=lambda s, r, th, t=0.0: r * g.kappa(s) * np.sin(th),
        name="1/xi",
    )
    rng = np.random.default_rng(5)
    s, th = rng.uniform(0, 1, 30), rng.uniform(0, 2 * np.pi, 30)
    r = g.R(s) * rng.uniform(0.1, 0.9, 30)
    a = np.stack(grad_inv_xi(g, s, r, th))
    b = np.stack(tube_gradient(inv_xi, g, s, r, th))
    assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))


def test_wall_normal_examples():
    R = 0.3
    f = AnalyticField(value=lambda s, r, th, t=0.0: r**2, ds=zero, dr=lambda s, r, th, t=0.0: 2 * r + 0 * s,
                      dth=zero, name="r^2")
    assert wall_normal_derivative(f, cylinder(R), 0.4, 1.0) == pytest.approx(2 * R)
    const = AnalyticField(value=one, ds=zero, dr=zero, dth=zero, name="1")
    assert wall_normal_derivative(const, CURVED, 0.4, 1.0) == 0
    assert wall_normal_derivative(field_s(), cone(1.0, 1.0), 0.0, 0.3) == pytest.approx(-1 / np.sqrt(2))


def test_wall_normal_forms_agree_when_straight():
    ms = generic_smooth(cone(0.2, 0.1), 1.0)
    th = np.linspace(0, 2 * np.pi, 7)
    a = wall_normal_derivative(ms.field, ms.geom, 0.4, th, 0.2, form="exact")
    b = wall_normal_derivative(ms.field, ms.geom, 0.4, th, 0.2, form="weight")
    assert np.allclose(a, b, rtol=1e-14)


def test_wall_normal_degenerate():
    with pytest.raises(DegenerateWallError):
        wall_normal_derivative(field_s(), arc_tube(1.0, 1.0), 0.5, np.pi, form="weight")


def test_wall_normal_matches_cartesian_fd():
    ms = generic_smooth(CURVED, 1.0, seed=2)
    s, th = np.array([0.3, 0.6]), np.array([0.4, 2.5])
    R = CURVED.R(s)
    h = 1e-6
    # outward unit normal from the Cartesian surface parametrisation
    dxs = (to_cartesian(CURVED, s + h, CURVED.R(s + h), th) - to_cartesian(CURVED, s - h, CURVED.R(s - h), th)) / (2 * h)
    dxt = (to_cartesian(CURVED, s, R, th + h) - to_cartesian(CURVED, s, R, th - h)) / (2 * h)
    nu = np.cross(dxt, dxs)
    nu /= np.linalg.norm(nu, axis=-1, keepdims=True)
    x = to_cartesian(CURVED, s, R, th)
    inward = to_cartesian(CURVED, s, 0.5 * R, th) - x
    nu *= -np.sign(np.sum(nu * inward, -1))[:, None]

    def fun(xx):
        ss, rr, tt = from_cartesian(CURVED, xx, s_guess=s)
        return ms.field(ss, rr, tt, 0.1)

    fd = np.sum(_cartesian_fd_gradient(fun, x) * nu, -1)
    ours = wall_normal_derivative(ms.field, CURVED, s, th, 0.1)
    assert np.allclose(ours, fd, rtol=1e-6, atol=1e-8)


def test_end_normal_examples():
    f = field_s()
    assert end_normal_derivative(f, cylinder(0.2), 0, 0.1, 0.0) == -1
    assert end_normal_derivative(f, cylinder(0.2), 1, 0.1, 0.0) == 1
    g = TubeGeometry(PlanarCurve.arc(0.5), PolynomialRadius((1.2,)))
    assert end_normal_derivative(f, g, 0, 1.0, 0.0) == pytest.approx(-2.0)
    with pytest.raises(DomainError):
        end_normal_derivative(f, g, 2, 0.1, 0.0)


def test_integrate_examples():
    assert integrate(one, cylinder(1.0), Disk(0.3)) == pytest.approx(np.pi)
    vol = integrate(one, arc_tube(0.8, 0.3), Volume(0.0, 1.0))
    assert vol == pytest.approx(np.pi * 0.09, rel=1e-13)
    wall = integrate(lambda s, th: 1.0 + 0 * s, cylinder(0.01), Wall(0.0, 1.0))
    assert wall == pytest.approx(2 * np.pi * 0.01, rel=1e-13)
    with pytest.raises(DomainError):
        integrate(one, cylinder(1.0), Volume(0.5, 0.5))


def test_disk_polynomial_exactness():
    g = cylinder(0.8)
    nr = 4
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = int(rng.integers(0, 4))
        b = int(rng.integers(0, 4 - a))
        # r * x^(2a) y^(2b) has r-degree 2(a+b)+1 <= 2 nr - 1 when a + b <= 3
        def f(s, r, th):
            return (r * np.cos(th)) ** (2 * a) * (r * np.sin(th)) ** (2 * b)
        num = integrate_disk(f, g, 0.5, nr=nr, ntheta=16)
        from math import gamma
        R = 0.8
        exact = 2 * gamma(a + 0.5) * gamma(b + 0.5) / gamma(a + b + 1) * R ** (2 * (a + b) + 2) / (2 * (a + b) + 2)
        assert num == pytest.approx(exact, rel=1e-13)


def test_volume_is_fubini_of_disks():
    ms = generic_smooth(CURVED, 1.0)
    f = lambda S, r, TH: ms.field(S, r, TH, 0.2)  # noqa: E731
    vol = integrate_volume(f, CURVED, 0.2, 0.8, ns=40)
    from numpy.polynomial import legendre
    x, w = legendre.leggauss(40)
    s = 0.5 + 0.3 * x
    per = integrate_disk(lambda S, r, TH: f(S, r, TH) / curvature_factor(CURVED, S, r, TH), CURVED, s)
    assert vol == pytest.approx(0.3 * np.sum(w * per), rel=1e-12)


def test_integrate_dispatch_matches_quadrature():
    ms = generic_smooth(CURVED, 1.0)
    q = Quadrature(ns=32)
    a = integrate(ms.field, CURVED, Volume(0.1, 0.9), t=0.4, quad=q)
    b = integrate_volume(lambda S, r, TH: ms.field(S, r, TH, 0.4), CURVED, 0.1, 0.9, ns=32)
    assert a == pytest.approx(b, rel=1e-14)


def test_sampled_field_derivatives_and_csv(tmp_path):
    ms = generic_smooth(CURVED, 1.0)
    grid = TubeGrid(CURVED, ns=81, nr=8, ntheta=64)
    sf = SampledField.from_analytic(ms.field, grid, [0.0, 0.5])
    S, r, TH, _ = grid.mesh()
    for ch in ("ds", "dr", "dth", "dt"):
        exact = ms.field(S, r, TH, 0.5, channel=ch)
        err = np.max(np.abs(sf.on_grid(ch, 0.5) - exact)) / np.max(np.abs(exact))
        assert err < 1e-4, ch
    path = tmp_path / "field.csv"
    sf.to_csv(path)
    back = SampledField.from_csv(path, grid)
    assert np.array_equal(back.values, sf.values)
    assert np.array_equal(back.dt, sf.dt)


def test_sampled_field_missing_time_channel():
    grid = TubeGrid(cylinder(0.2), ns=11, nr=4, ntheta=8)
    sf = SampledField(grid, [0.0], np.zeros((1, 11, 4, 8)))
    assert not sf.has("dt")
    with pytest.raises(CapabilityError):
        sf.on_grid("dt", 0.0)


def test_wall_trace_shape():
    ms = generic_smooth(CURVED, 1.0)
    s = np.linspace(0, 1, 11)
    tr = WallTrace.from_field(ms.field, CURVED, s, n_theta=12, t=0.1)
    assert tr.values.shape == (11, 12)
    th, _ = theta_nodes(12)
    assert np.allclose(tr.values, ms.field(s[:, None], CURVED.R(s)[:, None], th[None, :], 0.1))


def test_green_identity_for_smooth_field():
    # int Xi^-1 lap f dV = -int grad(1/Xi).grad f dV + wall and end flux terms
    ms = generic_smooth(CURVED, 1.0, seed=4)
    f, g, t, s0, s1 = ms.field, CURVED, 0.3, 0.15, 0.85
    lhs = integrate_volume(lambda S, r, TH: f(S, r, TH, t, channel="lap") / curvature_factor(g, S, r, TH),
                           g, s0, s1, ns=48, nr=10, ntheta=32)

    def gd(S, r, TH):
        a = tube_gradient(f, g, S, r, TH, t)
        q = grad_inv_xi(g, S, r, TH)
        return sum(x * y for x, y in zip(a, q))

    vol = integrate_volume(gd, g, s0, s1, ns=48, nr=10, ntheta=32)
    from horntube.fieldops import integrate_wall
    wall = integrate_wall(lambda S, TH: wall_normal_derivative(f, g, S, TH, t) / curvature_factor(g, S, g.R(S), TH),
                          g, s0, s1, ns=48, ntheta=64)
    ends = (integrate_disk(lambda S, r, TH: f(S, r, TH, t, channel="ds"), g, s1, 10, 32)
            - integrate_disk(lambda S, r, TH: f(S, r, TH, t, channel="ds"), g, s0, 10, 32))
    rhs = -vol + wall + ends
    assert lhs == pytest.approx(rhs, rel=1e-6)
