"""Planar (disk) and wall averages of tube fields and their intertwining relation.

    planar_average:  (A f)(s) = A(s)^-1 * integral of f over Gamma(s)
    wall_average:    (B g)(s) = (1 / 2 pi) * integral of g(s, R(s), theta) dtheta

For smooth fields d/ds (A f) = A(df/ds) + (A'/A) (B f - A f), which lets the
s-derivative of an average be computed without differentiating a profile.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev

from .errors import CapabilityError
from .fieldops import AnalyticField, SampledField, TubeGrid, WallTrace, integrate_disk, theta_nodes
from .geometry import TubeGeometry


@dataclass
class Profile1D:
    """Function of arc length sampled on an s-grid."""

    s: np.ndarray
    values: np.ndarray
    name: str = "profile"

    def __post_init__(self):
        self.s = np.asarray(self.s, float)
        self.values = np.asarray(self.values, float)
        if self.values.shape != self.s.shape:
            raise ValueError("profile values must match the s-grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"profile {self.name!r} has non-finite values")

    def __add__(self, other):
        return Profile1D(self.s, self.values + _values(other), self.name)

    def __sub__(self, other):
        return Profile1D(self.s, self.values - _values(other), self.name)

    def __mul__(self, k):
        return Profile1D(self.s, self.values * _values(k), self.name)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.sqrt(np.trapezoid(self.values**2, self.s)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", self.name])
            for s, v in zip(self.s, self.values):
                w.writerow([repr(float(s)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "Profile1D":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=float)
        return cls(data[:, 0], data[:, 1], rows[0][1])


def _values(x):
    return x.values if isinstance(x, Profile1D) else x


def _s_points(f, s):
    if s is not None:
        return np.atleast_1d(np.asarray(s, float))
    if isinstance(f, SampledField):
        return f.grid.s
    raise ValueError("an s-grid is required for analytic fields")


def planar_average(f, geom: TubeGeometry, t: float = 0.0, s=None, nr: int = 8, ntheta: int = 16,
                   channel: str = "value") -> Profile1D:
    """Disk average of a field (or one of its channels) at each s."""
    if isinstance(f, SampledField):
        grid = f.grid
        vals = f.on_grid(channel, t)
        _, _, _, dA = grid.mesh()
        out = np.sum(vals * dA, axis=(1, 2)) / geom.area(grid.s)
        return Profile1D(grid.s, out, f"avg {channel}")
    s = _s_points(f, s)
    f.channel(channel)
    integral = integrate_disk(lambda S, r, TH: f(S, r, TH, t, channel=channel), geom, s, nr, ntheta)
    return Profile1D(s, integral / geom.area(s), f"avg {channel}")


def wall_average(g, geom: TubeGeometry | None = None, t: float = 0.0, s=None, ntheta: int = 32,
                 weight: str = "one", channel: str = "value") -> Profile1D:
    """Circumferential mean of a wall trace.

    ``weight="cos"`` gives the mean of g * cos(theta), the moment entering the
    curvature part of the wall dissipation load.
    """
    if isinstance(g, SampledField):
        g = g.wall_trace(t)
    if isinstance(g, WallTrace):
        vals = g.values if channel == "value" else g.dt
        if vals is None:
            raise CapabilityError(f"wall trace has no {channel!r} channel")
        w = np.cos(g.theta) if weight == "cos" else np.ones_like(g.theta)
        return Profile1D(g.s, np.mean(vals * w[None, :], axis=1), "wall avg")
    if geom is None:
        raise ValueError("geometry required to take the wall trace of an analytic field")
    s = _s_points(g, s)
    th, _ = theta_nodes(ntheta)
    S, TH = s[:, None], th[None, :]
    vals = g(S, geom.R(S), TH, t, channel=channel)
    w = np.cos(TH) if weight == "cos" else 1.0
    return Profile1D(s, np.mean(vals * w, axis=1), "wall avg")


def average_s_derivative(f, geom: TubeGeometry, t: float = 0.0, s=None, nr: int = 8,
                         ntheta: int = 16, method: str = "intertwining") -> Profile1D:
    """d/ds of the planar average without differentiating a profile.

    ``method="intertwining"`` uses A(f_s) + (A'/A)(B f - A f).
    ``method="stretched"`` maps each disk to the unit disk, r = R(s) x, and
    differentiates under the integral: A(f_s + (r R'/R) f_r).  The two routes
    share no intermediate quantities.
    """
    if isinstance(f, AnalyticField):
        f.require("ds")
    if method == "stretched":
        s = _s_points(f, s)
        f.require("dr")
        ratio = geom.dR(s) / geom.R(s)
        def g(S, r, TH):
            return f(S, r, TH, t, channel="ds") + r * ratio[:, None, None] * f(S, r, TH, t, channel="dr")
        return Profile1D(s, integrate_disk(g, geom, s, nr, ntheta) / geom.area(s), "d/ds avg")
    if method != "intertwining":
        raise ValueError(f"unknown method {method!r}")
    mean_ds = planar_average(f, geom, t, s, nr, ntheta, channel="ds")
    mean = planar_average(f, geom, t, s, nr, ntheta)
    wall = wall_average(f, geom, t, mean.s, ntheta=2 * ntheta)
    ratio = geom.area_derivative(mean.s) / geom.area(mean.s)
    return Profile1D(mean.s, mean_ds.values + ratio * (wall.values - mean.values), "d/ds avg")


def spectral_derivative(func, s, interval=(0.0, 1.0), degree: int = 48) -> np.ndarray:
    """Derivative of a smooth scalar function of s by Chebyshev interpolation.

    Used as an independent cross-check of :func:`average_s_derivative`.
    """
    cheb = chebyshev.Chebyshev.interpolate(lambda x: np.asarray(func(x), float), degree, domain=list(interval))
    return cheb.deriv()(np.asarray(s, float))


def planar_average_function(f, geom: TubeGeometry, t: float = 0.0, nr: int = 8, ntheta: int = 16,
                            channel: str = "value"):
    """Return s -> (A f)(s) as a vectorised callable."""
    def avg(s):
        s = np.atleast_1d(np.asarray(s, float))
        return planar_average(f, geom, t, s, nr, ntheta, channel).values
    return avg


def operator_bound(geom: TubeGeometry, grid: TubeGrid) -> float:
    """Constant C with ||A f||_{L2(0,1)} <= C ||f||_{L2(Omega)}: sqrt(max Xi / A)."""
    S, r, TH, _ = grid.mesh()
    k = np.abs(geom.kappa(grid.s))
    R = geom.R(grid.s)
    xi_max = 1.0 / (1.0 - R * k)
    return float(np.sqrt(np.max(xi_max / geom.area(grid.s))))
