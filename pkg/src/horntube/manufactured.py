"""Manufactured velocity potentials with symbolic derivative channels.

A manufactured solution is a sympy expression phi(s, r, theta, t) on a tube
whose curvature and radius are available in closed form.  Every channel the
verification harness needs (first derivatives, phi_t, phi_tt and the
Laplacian in tube coordinates) is derived symbolically and lambdified.  The
Laplacian uses the orthogonal metric of torsion-free tube coordinates,

    lap phi = (Xi / r) [ d_s(r Xi d_s phi) + d_r((r / Xi) d_r phi) + d_theta(d_theta phi / (r Xi)) ].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import PreconditionError
from .fieldops import AnalyticField, wall_normal_derivative
from .geometry import TubeGeometry, from_cartesian, to_cartesian

s, r, theta, t = sp.symbols("s r theta t", real=True)


def _lambdify(expr):
    fn = sp.lambdify((s, r, theta, t), expr, modules="numpy", cse=True)

    def wrapped(S, Rr, TH, T=0.0):
        return fn(S, Rr, TH, T) + 0.0 * (np.asarray(S, float) + np.asarray(Rr, float) + np.asarray(TH, float) + np.asarray(T, float))

    return wrapped


def tube_laplacian(expr, kappa):
    xi = 1 / (1 - r * kappa * sp.cos(theta))
    return (xi / r) * (
        sp.diff(r * xi * sp.diff(expr, s), s)
        + sp.diff((r / xi) * sp.diff(expr, r), r)
        + sp.diff(sp.diff(expr, theta) / (r * xi), theta)
    )


@dataclass
class ManufacturedSolution:
    """Analytic phi on ``geom`` with all channels, plus its PDE and wall defects.

    ``exact`` records whether phi solves phi_tt = c^2 lap phi together with the
    wall condition d phi / d nu + alpha phi_t = 0; it is checked numerically
    by :meth:`check_exactness`.
    """

    expr: sp.Expr
    geom: TubeGeometry
    c: float
    alpha: float = 0.0
    exact: bool = False
    name: str = "manufactured"
    field: AnalyticField = field(init=False, repr=False)

    def __post_init__(self):
        kappa = self.geom.centerline.curvature_expr(s)
        if kappa is None:
            raise PreconditionError("manufactured solutions need a closed-form centerline curvature")
        e = sp.sympify(self.expr)
        self.expr = e
        self._lap_expr = tube_laplacian(e, kappa)
        self.field = AnalyticField(
            value=_lambdify(e),
            ds=_lambdify(sp.diff(e, s)),
            dr=_lambdify(sp.diff(e, r)),
            dth=_lambdify(sp.diff(e, theta)),
            dt=_lambdify(sp.diff(e, t)),
            dtt=_lambdify(sp.diff(e, t, 2)),
            lap=_lambdify(self._lap_expr),
            name=self.name,
        )
        self._dst = _lambdify(sp.diff(e, s, t))
        self._drt = _lambdify(sp.diff(e, r, t))

    def __call__(self, S, Rr, TH, T=0.0, channel="value"):
        return self.field(S, Rr, TH, T, channel=channel)

    def has(self, name):
        return self.field.has(name)

    def channel(self, name):
        return self.field.channel(name)

    def require(self, *names):
        self.field.require(*names)

    @property
    def time_derivative_field(self) -> AnalyticField:
        """phi_t with its own s, r derivatives (needed for time-differentiated averages)."""
        f = self.field
        return AnalyticField(value=f.dt, ds=self._dst, dr=self._drt, dt=f.dtt, name=f"{self.name}_t")

    def pde_defect(self, S, Rr, TH, T=0.0):
        """d = phi_tt / c^2 - lap phi (zero for exact solutions)."""
        return self.field.dtt(S, Rr, TH, T) / self.c**2 - self.field.lap(S, Rr, TH, T)

    def wall_defect(self, S, TH, T=0.0):
        """b = d phi / d nu + alpha phi_t on the wall (zero for exact solutions)."""
        R = self.geom.R(S)
        return wall_normal_derivative(self.field, self.geom, S, TH, T) + self.alpha * self.field.dt(S, R, TH, T)

    def check_laplacian(self, n_points: int = 20, seed: int = 0, h: float = 1e-3, t0: float = 0.0):
        """Max relative mismatch between the Laplacian channel and a Cartesian FD Laplacian."""
        rng = np.random.default_rng(seed)
        S = rng.uniform(0.15, 0.85, n_points)
        Rr = self.geom.R(S) * rng.uniform(0.2, 0.8, n_points)
        TH = rng.uniform(0, 2 * np.pi, n_points)
        x0 = to_cartesian(self.geom, S, Rr, TH)

        def phi_x(x):
            ss, rr, tt = from_cartesian(self.geom, x, s_guess=np.repeat(S, len(x) // len(S)))
            return self.field(ss, rr, tt, t0)

        coeffs = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
        lap_fd = np.zeros(n_points)
        for axis in range(3):
            for k, off in enumerate(range(-2, 3)):
                if off == 0:
                    continue
                x = x0.copy()
                x[:, axis] += off * h
                lap_fd += coeffs[k] * phi_x(x)
            lap_fd += coeffs[2] * self.field(S, Rr, TH, t0)
        lap = self.field.lap(S, Rr, TH, t0)
        scale = max(np.max(np.abs(lap)), 1e-300)
        return float(np.max(np.abs(lap - lap_fd)) / scale)

    def check_exactness(self, n_points: int = 200, seed: int = 1, times=(0.0, 0.37)):
        """Max |pde defect| and |wall defect| on random interior and wall points."""
        rng = np.random.default_rng(seed)
        S = rng.uniform(0.0, 1.0, n_points)
        Rr = self.geom.R(S) * rng.uniform(0.05, 1.0, n_points)
        TH = rng.uniform(0, 2 * np.pi, n_points)
        pde = max(float(np.max(np.abs(self.pde_defect(S, Rr, TH, T)))) for T in times)
        wall = max(float(np.max(np.abs(self.wall_defect(S, TH, T)))) for T in times)
        return pde, wall


# ---------------------------------------------------------------------------
# Catalogue
# ---------------------------------------------------------------------------


def plane_wave(geom: TubeGeometry, c: float, k: float = 2 * np.pi, phase: float = 0.0) -> ManufacturedSolution:
    """sin(k (s - c t) + phase): exact on a cylinder with a hard wall."""
    return ManufacturedSolution(sp.sin(k * (s - c * t) + phase), geom, c, 0.0, True, "plane-wave")


def reflected_pulse(geom: TubeGeometry, c: float, center: float = -0.3, width: float = 0.08) -> ManufacturedSolution:
    """Gaussian pulse f(s - c t) minus its mirror f(2 - s - c t): exact, zero at s = 1."""
    def f(x):
        return sp.exp(-((x - center) / width) ** 2)
    return ManufacturedSolution(f(s - c * t) - f(2 - s - c * t), geom, c, 0.0, True, "reflected-pulse")


def dirichlet_mode(geom: TubeGeometry, c: float, mode: int = 0) -> ManufacturedSolution:
    """Standing wave sin((2m+1) pi (1 - s) / 2) cos(omega t) of a closed-open cylinder."""
    k = (2 * mode + 1) * sp.pi / 2
    return ManufacturedSolution(sp.sin(k * (1 - s)) * sp.cos(k * c * t), geom, c, 0.0, True, "dirichlet-mode")


def spherical_wave(geom: TubeGeometry, c: float, k: float = 3.0, phase: float = 0.3) -> ManufacturedSolution:
    """sin(k rho - k c t + phase) / rho, rho the distance to the cone apex: exact on a straight cone."""
    coeffs = getattr(geom.radius, "coeffs", None)
    if coeffs is None or len(coeffs) != 2 or coeffs[1] <= 0 or geom.centerline.kind != "line":
        raise PreconditionError("spherical waves need a straight cone R(s) = R0 + slope * s")
    r0, slope = coeffs
    apex = r0 / slope
    # wall generators pass through the apex, so functions of rho alone have zero wall flux
    rho = sp.sqrt((s + apex) ** 2 + r**2)
    expr = sp.sin(k * rho - k * c * t + phase) / rho
    return ManufacturedSolution(expr, geom, c, 0.0, True, "spherical-wave")


def spherical_pulse(geom: TubeGeometry, c: float, start: float = 0.3, width: float = 0.06) -> ManufacturedSolution:
    """Outgoing spherical Gaussian exp(-((rho - rho0 - start - c t) / width)^2) / rho on a straight cone.

    rho0 is the inlet distance to the apex.  While the packet stays away from
    the outlet its planar average vanishes at s = 1 to within exp(-(d/width)^2).
    """
    coeffs = getattr(geom.radius, "coeffs", None)
    if coeffs is None or len(coeffs) != 2 or coeffs[1] <= 0 or geom.centerline.kind != "line":
        raise PreconditionError("spherical waves need a straight cone R(s) = R0 + slope * s")
    r0, slope = coeffs
    apex = r0 / slope
    rho = sp.sqrt((s + apex) ** 2 + r**2)
    expr = sp.exp(-((rho - apex - start - c * t) / width) ** 2) / rho
    return ManufacturedSolution(expr, geom, c, 0.0, True, "spherical-pulse")


def generic_smooth(geom: TubeGeometry, c: float, alpha: float = 0.0, omega: float = 2.0,
                   dirichlet: bool = True, seed: int | None = None) -> ManufacturedSolution:
    """Smooth, non-axisymmetric field that is not a wave-equation solution.

    With ``dirichlet`` the field vanishes on the outlet disk s = 1.  ``seed``
    perturbs the coefficients to produce a family of random fields.
    """
    a = [0.7, 0.4, 0.3, 0.5, 0.2, 1.3]
    if seed is not None:
        rng = np.random.default_rng(seed)
        a = list(rng.uniform(0.1, 1.0, 6))
        a[5] = float(rng.uniform(0.5, 2.0))
    expr = (
        (sp.cos(a[5] * sp.pi * s - omega * t) + a[0] * s**2 * sp.sin(omega * t))
        * (1 + a[1] * r**2 + a[2] * r * sp.cos(theta) + a[3] * r**2 * sp.sin(2 * theta) * sp.cos(t))
        + a[4] * r**3 * sp.cos(theta) * s
    )
    if dirichlet:
        expr = (1 - s) * expr
    return ManufacturedSolution(expr, geom, c, alpha, False, "generic")
