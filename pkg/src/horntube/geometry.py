"""Curved tubular domains in tube coordinates (s, r, theta).

A tube is a centerline curve parametrised by arc length on [0, 1] together
with a circular cross-section of radius R(s).  Points are addressed by

    x = gamma(s) + r cos(theta) n(s) + r sin(theta) b(s)

and all metric quantities (curvature factor, wall weight, sound speed
correction) are evaluated in closed form from the centerline curvature and
the radius profile.

Only torsion-free (planar) centerlines are supported.  For planar curves the
in-plane normal n = b x t is used as the tube frame; the curvature returned by
:meth:`CenterlineCurve.curvature` is signed with respect to that normal, so the
frame stays smooth through inflection points.  :func:`frenet_frame` returns the
classical Frenet frame (kappa = |gamma''|) for callers that need it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp
from numpy.polynomial import legendre, polynomial as npoly
from scipy.interpolate import CubicSpline

from .errors import DegenerateFrameError, DomainError, GeometryError, PoleError

CURVATURE_FLOOR = 1e-12
INLET_TOL = 1e-12
_DOMAIN_SLACK = 1e-12

_GL_X, _GL_W = legendre.leggauss(40)


def _as_array(s):
    return np.asarray(s, dtype=float)


def _check_s(s):
    s = _as_array(s)
    if np.any(s < -_DOMAIN_SLACK) or np.any(s > 1.0 + _DOMAIN_SLACK) or np.any(~np.isfinite(s)):
        raise DomainError(f"arc length outside [0, 1]: {s[(s < 0) | (s > 1)].ravel()[:3]}")
    return np.clip(s, 0.0, 1.0)


def _stack3(x, y, z):
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


# ---------------------------------------------------------------------------
# Centerlines
# ---------------------------------------------------------------------------


class CenterlineCurve:
    """Arc-length parametrised planar curve with a smooth tube frame."""

    kind: str = "abstract"

    def position(self, s) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, s) -> np.ndarray:
        raise NotImplementedError

    def normal(self, s) -> np.ndarray:
        raise NotImplementedError

    def binormal(self, s) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, s) -> np.ndarray:
        """Signed curvature with respect to :meth:`normal`."""
        raise NotImplementedError

    def curvature_derivative(self, s) -> np.ndarray:
        raise NotImplementedError

    def torsion(self, s) -> np.ndarray:
        return np.zeros_like(_as_array(s))

    def curvature_expr(self, s: sp.Symbol):
        """Sympy expression for the signed curvature, or None if not closed-form."""
        return None

    @property
    def planarity_defect(self) -> float:
        return 0.0


@dataclass(frozen=True)
class LineCurve(CenterlineCurve):
    """Straight segment gamma(s) = origin + s * direction."""

    origin: tuple = (0.0, 0.0, 0.0)
    direction: tuple = (1.0, 0.0, 0.0)
    normal_vector: tuple = (0.0, 1.0, 0.0)
    kind: str = field(default="line", init=False)

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        n = np.asarray(self.normal_vector, float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise GeometryError("line direction must be a unit vector")
        n = n - d * np.dot(n, d)
        if np.linalg.norm(n) < 1e-12:
            raise GeometryError("line normal must not be parallel to the direction")
        object.__setattr__(self, "normal_vector", tuple(n / np.linalg.norm(n)))

    def position(self, s):
        s = _as_array(s)
        return np.asarray(self.origin) + s[..., None] * np.asarray(self.direction)

    def tangent(self, s):
        s = _as_array(s)
        return np.broadcast_to(np.asarray(self.direction, float), s.shape + (3,)).copy()

    def normal(self, s):
        s = _as_array(s)
        return np.broadcast_to(np.asarray(self.normal_vector, float), s.shape + (3,)).copy()

    def binormal(self, s):
        s = _as_array(s)
        b = np.cross(self.direction, self.normal_vector)
        return np.broadcast_to(b, s.shape + (3,)).copy()

    def curvature(self, s):
        return np.zeros_like(_as_array(s))

    def curvature_derivative(self, s):
        return np.zeros_like(_as_array(s))

    def curvature_expr(self, s):
        return sp.Integer(0)


@dataclass(frozen=True)
class PlanarCurve(CenterlineCurve):
    """Planar curve in the xy-plane with polynomial signed curvature.

    The tangent angle is ``angle + integral of curvature``; a single
    coefficient gives a circular arc (closed form), higher degrees are
    integrated with fixed-order Gauss-Legendre quadrature.
    """

    curvature_coeffs: tuple = (0.0,)
    origin: tuple = (0.0, 0.0, 0.0)
    angle: float = 0.0
    kind: str = field(default="planar", init=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.curvature_coeffs))
        object.__setattr__(self, "curvature_coeffs", coeffs)
        if len(coeffs) == 1:
            object.__setattr__(self, "kind", "planar-arc")

    @classmethod
    def arc(cls, curvature: float, origin=(0.0, 0.0, 0.0), angle: float = 0.0) -> "PlanarCurve":
        return cls((curvature,), origin=origin, angle=angle)

    def _turning(self, s):
        integral = npoly.polyint(self.curvature_coeffs)
        return self.angle + npoly.polyval(s, integral)

    def position(self, s):
        s = _as_array(s)
        o = np.asarray(self.origin, float)
        k = self.curvature_coeffs[0]
        if len(self.curvature_coeffs) == 1:
            a = self.angle
            if abs(k) < CURVATURE_FLOOR:
                x = s * np.cos(a)
                y = s * np.sin(a)
            else:
                x = (np.sin(a + k * s) - np.sin(a)) / k
                y = (np.cos(a) - np.cos(a + k * s)) / k
        else:
            sigma = 0.5 * s[..., None] * (_GL_X + 1.0)
            ang = self._turning(sigma)
            x = 0.5 * s * np.sum(_GL_W * np.cos(ang), axis=-1)
            y = 0.5 * s * np.sum(_GL_W * np.sin(ang), axis=-1)
        return o + _stack3(x, y, np.zeros_like(s))

    def tangent(self, s):
        a = self._turning(_as_array(s))
        return _stack3(np.cos(a), np.sin(a), np.zeros_like(a))

    def normal(self, s):
        a = self._turning(_as_array(s))
        return _stack3(-np.sin(a), np.cos(a), np.zeros_like(a))

    def binormal(self, s):
        s = _as_array(s)
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]), s.shape + (3,)).copy()

    def curvature(self, s):
        return npoly.polyval(_as_array(s), self.curvature_coeffs) + 0.0 * _as_array(s)

    def curvature_derivative(self, s):
        d = npoly.polyder(self.curvature_coeffs) if len(self.curvature_coeffs) > 1 else [0.0]
        return npoly.polyval(_as_array(s), d) + 0.0 * _as_array(s)

    def curvature_expr(self, s):
        return sum(sp.Float(c) * s**k for k, c in enumerate(self.curvature_coeffs))


class SplineCurve(CenterlineCurve):
    """Cubic-spline centerline through sample points, reparametrised by arc length.

    Points are projected onto their best-fit plane; the out-of-plane residual
    is kept as :attr:`planarity_defect` so that :func:`validate` can reject
    twisted inputs.  With ``normalize=True`` coordinates are scaled so that the
    arc length is exactly one and the original length is kept in
    :attr:`length_scale`.
    """

    kind = "spline"

    def __init__(self, points: Sequence[Sequence[float]], normalize: bool = True, table_size: int = 4097):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
            raise GeometryError("spline centerline needs at least 4 points in 3D")
        centroid = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - centroid)
        e1, e2, e3 = vt
        # orient the in-plane basis with the initial chord
        chord = pts[1] - pts[0]
        if np.dot(chord, e1) < 0:
            e1 = -e1
        e3 = np.cross(e1, e2)
        self._planarity = float(np.max(np.abs((pts - centroid) @ e3)))
        uv = np.column_stack([(pts - centroid) @ e1, (pts - centroid) @ e2])
        seg = np.linalg.norm(np.diff(uv, axis=0), axis=1)
        if np.any(seg <= 0):
            raise GeometryError("spline centerline has repeated points")
        u = np.concatenate([[0.0], np.cumsum(seg)])
        length = self._arc_length_of(CubicSpline(u, uv, axis=0), u)
        self.length_scale = float(length) if normalize else 1.0
        scale = 1.0 / self.length_scale
        self._origin = centroid * scale
        self._e1, self._e2, self._e3 = e1, e2, e3
        self._u = u * scale
        self._spline = CubicSpline(self._u, uv * scale, axis=0)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self._d3 = self._spline.derivative(3)
        table_u = np.linspace(0.0, self._u[-1], table_size)
        self._table_u = table_u
        self._table_s = self._cumulative_length(table_u)
        self.total_length = float(self._table_s[-1])

    def _speed(self, u):
        return np.linalg.norm(self._d1(u), axis=-1)

    @staticmethod
    def _arc_length_of(spline, knots):
        d1 = spline.derivative(1)
        a, b = knots[:-1], knots[1:]
        nodes = 0.5 * (b - a)[:, None] * (_GL_X + 1.0) + a[:, None]
        speed = np.linalg.norm(d1(nodes), axis=-1)
        return float(np.sum(0.5 * (b - a)[:, None] * _GL_W * speed))

    def _segment_length(self, a, b):
        nodes = 0.5 * (b - a)[..., None] * (_GL_X + 1.0) + a[..., None]
        return 0.5 * (b - a) * np.sum(_GL_W * self._speed(nodes), axis=-1)

    def _cumulative_length(self, table_u):
        pieces = self._segment_length(table_u[:-1], table_u[1:])
        return np.concatenate([[0.0], np.cumsum(pieces)])

    def _param(self, s):
        """Spline parameter u with arc length s (Newton polish of table lookup)."""
        s = _as_array(s) * self.total_length
        idx = np.clip(np.searchsorted(self._table_s, s) - 1, 0, len(self._table_u) - 2)
        u0 = self._table_u[idx]
        s0 = self._table_s[idx]
        u = np.interp(s, self._table_s, self._table_u)
        for _ in range(4):
            g = s0 + self._segment_length(u0, u) - s
            u = u - g / self._speed(u)
        return u

    def _to_space(self, uv, offset=True):
        out = uv[..., 0:1] * self._e1 + uv[..., 1:2] * self._e2
        return out + self._origin if offset else out

    def position(self, s):
        return self._to_space(self._spline(self._param(s)))

    def tangent(self, s):
        d = self._d1(self._param(s))
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return self._to_space(d, offset=False)

    def normal(self, s):
        return np.cross(self._e3, self.tangent(s))

    def binormal(self, s):
        s = _as_array(s)
        return np.broadcast_to(self._e3, s.shape + (3,)).copy()

    def curvature(self, s):
        u = self._param(s)
        d1, d2 = self._d1(u), self._d2(u)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def curvature_derivative(self, s):
        u = self._param(s)
        d1, d2, d3 = self._d1(u), self._d2(u), self._d3(u)
        speed = np.linalg.norm(d1, axis=-1)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        dcross = d1[..., 0] * d3[..., 1] - d1[..., 1] * d3[..., 0]
        dot = np.sum(d1 * d2, axis=-1)
        dk_du = dcross / speed**3 - 3.0 * cross * dot / speed**5
        return dk_du / speed

    @property
    def planarity_defect(self) -> float:
        return self._planarity / self.length_scale


# ---------------------------------------------------------------------------
# Radius profiles
# ---------------------------------------------------------------------------


class RadiusProfile:
    """Cross-section radius R(s) with first and second derivatives."""

    def __call__(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError

    def second_derivative(self, s):
        raise NotImplementedError

    def expr(self, s: sp.Symbol):
        return None


@dataclass(frozen=True)
class PolynomialRadius(RadiusProfile):
    """R(s) = sum_k coeffs[k] * s**k."""

    coeffs: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in np.atleast_1d(self.coeffs)))

    def __call__(self, s):
        s = _as_array(s)
        return npoly.polyval(s, self.coeffs) + 0.0 * s

    def derivative(self, s):
        s = _as_array(s)
        return npoly.polyval(s, npoly.polyder(self.coeffs)) + 0.0 * s if len(self.coeffs) > 1 else 0.0 * s

    def second_derivative(self, s):
        s = _as_array(s)
        return npoly.polyval(s, npoly.polyder(self.coeffs, 2)) + 0.0 * s if len(self.coeffs) > 2 else 0.0 * s

    def expr(self, s):
        return sum(sp.Float(c) * s**k for k, c in enumerate(self.coeffs))


class SplineRadius(RadiusProfile):
    """Radius interpolated from (s, R) samples with a C2 cubic spline."""

    def __init__(self, s_samples, r_samples, length_scale: float = 1.0):
        s = np.asarray(s_samples, float)
        r = np.asarray(r_samples, float) / length_scale
        if s.ndim != 1 or s.shape != r.shape or len(s) < 4:
            raise GeometryError("radius samples need matching 1D arrays with >= 4 entries")
        self._spline = CubicSpline(s, r)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)

    def __call__(self, s):
        return self._spline(_as_array(s))

    def derivative(self, s):
        return self._d1(_as_array(s))

    def second_derivative(self, s):
        return self._d2(_as_array(s))


# ---------------------------------------------------------------------------
# Tube
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TubePoint:
    s: float
    r: float
    theta: float


@dataclass(frozen=True)
class TubeGeometry:
    """Immutable tube: centerline plus radius profile."""

    centerline: CenterlineCurve
    radius: RadiusProfile

    # -- 1D profiles -------------------------------------------------------
    def R(self, s):
        return self.radius(_check_s(s))

    def dR(self, s):
        return self.radius.derivative(_check_s(s))

    def d2R(self, s):
        return self.radius.second_derivative(_check_s(s))

    def kappa(self, s):
        return self.centerline.curvature(_check_s(s))

    def dkappa(self, s):
        return self.centerline.curvature_derivative(_check_s(s))

    def eta(self, s):
        return self.R(s) * np.abs(self.kappa(s))

    def area(self, s):
        return np.pi * self.R(s) ** 2

    def area_derivative(self, s):
        return 2.0 * np.pi * self.R(s) * self.dR(s)

    def area_second_derivative(self, s):
        return 2.0 * np.pi * (self.dR(s) ** 2 + self.R(s) * self.d2R(s))

    @property
    def reflection_free_inlet(self) -> bool:
        return bool(abs(self.area_derivative(0.0)) < INLET_TOL and abs(self.kappa(0.0)) < INLET_TOL)

    def check_point(self, s, r, theta):
        s = _check_s(s)
        r = _as_array(r)
        if np.any(r < 0):
            raise DomainError("negative radial coordinate")
        prod = r * self.kappa(s) * np.cos(theta)
        if np.any(prod >= 1.0):
            raise GeometryError("non-folding condition violated: r*kappa*cos(theta) >= 1")
        return s


def frenet_frame(curve: CenterlineCurve, s, straight_limit: bool = True):
    """Frenet frame (t, n, b) with kappa = |gamma''| and torsion.

    Where kappa falls below :data:`CURVATURE_FLOOR` the normal is undefined;
    with ``straight_limit`` the parallel-transported tube frame is returned
    instead, otherwise :class:`DegenerateFrameError` is raised.
    """
    s = _check_s(s)
    k = curve.curvature(s)
    t = curve.tangent(s)
    n = curve.normal(s)
    straight = np.abs(k) < CURVATURE_FLOOR
    if np.any(straight) and not straight_limit:
        raise DegenerateFrameError("curvature below floor; Frenet normal undefined")
    sign = np.where(k < 0, -1.0, 1.0)[..., None]
    n = n * sign
    b = np.cross(t, n)
    return t, n, b, np.abs(k), curve.torsion(s)


def curvature_factor(geom: TubeGeometry, s, r, theta):
    """Xi = 1 / (1 - r kappa(s) cos(theta))."""
    s = geom.check_point(s, r, theta)
    return 1.0 / (1.0 - np.asarray(r) * geom.kappa(s) * np.cos(theta))


def sound_correction(geom: TubeGeometry, s, c: float):
    """Sound speed correction Sigma(s) and corrected speed c * Sigma(s)."""
    if c <= 0:
        raise DomainError("sound speed must be positive")
    sigma = (1.0 + 0.25 * geom.eta(s) ** 2) ** -0.5
    return sigma, c * sigma


def wall_weight(geom: TubeGeometry, s):
    """W(s) = R sqrt(R'^2 + (eta - 1)^2), the circumferential wall weight."""
    R = geom.R(s)
    return R * np.sqrt(geom.dR(s) ** 2 + (geom.eta(s) - 1.0) ** 2)


def wall_density(geom: TubeGeometry, s, theta):
    """Exact wall surface density |r_s x r_theta| = R sqrt(R'^2 + (1 - R kappa cos theta)^2).

    Coincides with :func:`wall_weight` when kappa = 0 and at theta = 0.
    """
    R = geom.R(s)
    return R * np.sqrt(geom.dR(s) ** 2 + (1.0 - R * geom.kappa(s) * np.cos(theta)) ** 2)


def to_cartesian(geom: TubeGeometry, s, r, theta):
    """Cartesian position gamma(s) + r cos(theta) n(s) + r sin(theta) b(s)."""
    s = geom.check_point(s, r, theta)
    r = _as_array(r)[..., None]
    theta = _as_array(theta)[..., None]
    c = geom.centerline
    return c.position(s) + r * np.cos(theta) * c.normal(s) + r * np.sin(theta) * c.binormal(s)


def from_cartesian(geom: TubeGeometry, x, s_guess=None, iterations: int = 30):
    """Invert :func:`to_cartesian` by Newton iteration on the normal-plane condition."""
    x = np.atleast_2d(np.asarray(x, float))
    c = geom.centerline
    if s_guess is None:
        samples = np.linspace(0.0, 1.0, 401)
        pos = c.position(samples)
        d = np.linalg.norm(x[:, None, :] - pos[None, :, :], axis=-1)
        s = samples[np.argmin(d, axis=1)]
    else:
        s = np.broadcast_to(np.asarray(s_guess, float), x.shape[:1]).copy()
    for _ in range(iterations):
        sc = np.clip(s, 0.0, 1.0)
        rel = x - c.position(sc)
        g = np.sum(rel * c.tangent(sc), axis=-1)
        dg = -(1.0 - c.curvature(sc) * np.sum(rel * c.normal(sc), axis=-1))
        step = g / dg
        s = s - step
        if np.all(np.abs(step) < 1e-15):
            break
    s = np.clip(s, 0.0, 1.0)
    rel = x - c.position(s)
    a = np.sum(rel * c.normal(s), axis=-1)
    b = np.sum(rel * c.binormal(s), axis=-1)
    return s, np.hypot(a, b), np.mod(np.arctan2(b, a), 2.0 * np.pi)


def jacobian_det(geom: TubeGeometry, s, r, theta):
    """|det d(s, r, theta)/d(x, y, z)| = Xi / r."""
    r = _as_array(r)
    if np.any(r <= 0):
        raise PoleError("Jacobian of tube coordinates is singular at r = 0")
    return curvature_factor(geom, s, r, theta) / r


@dataclass
class ValidationReport:
    max_eta: float
    max_eta_at: float
    min_wall_weight: float
    reflection_free_inlet: bool
    arc_length_defect: float
    planarity_defect: float
    violations: list = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "accepted" if self.accepted else "rejected"
        lines = [
            f"geometry {status}: max eta = {self.max_eta:.6g} at s = {self.max_eta_at:.4g}",
            f"  min W = {self.min_wall_weight:.6g}, reflection-free inlet = {self.reflection_free_inlet}",
            f"  arc-length defect = {self.arc_length_defect:.3g}, planarity defect = {self.planarity_defect:.3g}",
        ]
        lines += [f"  violation: {v}" for v in self.violations]
        return "\n".join(lines)


def validate(geom: TubeGeometry, n_samples: int = 2001) -> ValidationReport:
    """Sample the invariants of ``geom`` and list every violation with its location."""
    s = np.linspace(0.0, 1.0, n_samples)
    eta = geom.eta(s)
    R = geom.R(s)
    W = wall_weight(geom, s)
    h = 1e-6
    sc = np.clip(s, h, 1.0 - h)
    c = geom.centerline
    speed = np.linalg.norm(c.position(sc + h) - c.position(sc - h), axis=-1) / (2.0 * h)
    arc_defect = float(np.max(np.abs(speed - 1.0)))
    violations = []
    i = int(np.argmax(eta))
    if eta[i] >= 1.0:
        violations.append(f"non-folding condition violated at s={s[i]:.6g} (eta={eta[i]:.6g} >= 1)")
    if np.any(R <= 0):
        j = int(np.argmin(R))
        violations.append(f"non-positive radius at s={s[j]:.6g}")
    if c.planarity_defect > 1e-9:
        violations.append(f"nonzero torsion: centerline not planar (defect {c.planarity_defect:.3g})")
    tol = 1e-6 if isinstance(c, SplineCurve) else 1e-8
    if arc_defect > tol:
        violations.append(f"centerline not parametrised by arc length (defect {arc_defect:.3g})")
    return ValidationReport(
        max_eta=float(eta[i]),
        max_eta_at=float(s[i]),
        min_wall_weight=float(np.min(W)),
        reflection_free_inlet=geom.reflection_free_inlet,
        arc_length_defect=arc_defect,
        planarity_defect=c.planarity_defect,
        violations=violations,
    )


# convenience constructors used by the CLI and tests


def cylinder(radius: float = 1.0) -> TubeGeometry:
    return TubeGeometry(LineCurve(), PolynomialRadius((radius,)))


def cone(r0: float = 1.0, slope: float = 1.0) -> TubeGeometry:
    return TubeGeometry(LineCurve(), PolynomialRadius((r0, slope)))


def arc_tube(curvature: float, radius: float) -> TubeGeometry:
    return TubeGeometry(PlanarCurve.arc(curvature), PolynomialRadius((radius,)))
