"""Fields on tube coordinates, tube differential operators and quadrature.

Disk integrals use Gauss-Legendre nodes in r (never touching r = 0) and a
midpoint rule in theta; the area element is r dr dtheta, the volume element
(r / Xi) ds dr dtheta and the wall element the exact surface density of
:func:`horntube.geometry.wall_density`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.interpolate import BarycentricInterpolator

from .errors import CapabilityError, DegenerateWallError, DomainError, PoleError
from .geometry import TubeGeometry, curvature_factor, wall_density, wall_weight

CHANNELS = ("value", "ds", "dr", "dth", "dt", "dtt", "lap")


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def theta_nodes(n_theta: int):
    th = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    return th, np.full(n_theta, 2.0 * np.pi / n_theta)


def s_rule(s0: float, s1: float, n: int, rule: str = "gauss"):
    """Nodes and weights for integrating over [s0, s1]."""
    if s1 <= s0:
        raise DomainError(f"empty interval [{s0}, {s1}]")
    if rule == "gauss":
        x, w = legendre.leggauss(n)
        return s0 + 0.5 * (s1 - s0) * (x + 1.0), 0.5 * (s1 - s0) * w
    s = np.linspace(s0, s1, n)
    h = (s1 - s0) / (n - 1)
    if rule == "trapezoid":
        w = np.full(n, h)
        w[[0, -1]] = 0.5 * h
        return s, w
    if rule == "simpson":
        if n % 2 == 0:
            raise DomainError("Simpson rule needs an odd number of nodes")
        w = np.full(n, 2.0 * h / 3.0)
        w[1::2] = 4.0 * h / 3.0
        w[[0, -1]] = h / 3.0
        return s, w
    raise DomainError(f"unknown quadrature rule {rule!r}")


@dataclass(frozen=True)
class TubeGrid:
    """Structured (s, r, theta) grid: uniform s, Gauss r on (0, R(s)), midpoint theta."""

    geom: TubeGeometry
    ns: int = 101
    nr: int = 8
    ntheta: int = 16

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.ns)

    @property
    def ds(self) -> float:
        return 1.0 / (self.ns - 1)

    @property
    def unit_r(self):
        """Gauss nodes and weights mapped to (0, 1)."""
        x, w = legendre.leggauss(self.nr)
        return 0.5 * (x + 1.0), 0.5 * w

    @property
    def theta(self):
        return theta_nodes(self.ntheta)

    def mesh(self, s=None):
        """Broadcastable (s, r, theta) node arrays of shape (len(s), nr, ntheta) and area weights."""
        s = self.s if s is None else np.atleast_1d(np.asarray(s, float))
        rho, wr = self.unit_r
        th, wth = self.theta
        R = self.geom.R(s)[:, None, None]
        r = R * rho[None, :, None]
        dA = R**2 * (rho * wr)[None, :, None] * wth[None, None, :]
        S = s[:, None, None]
        TH = th[None, None, :]
        return S, r, TH, dA


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticField:
    """Scalar field phi(s, r, theta, t) given by closed-form callables.

    Each channel is a numpy-broadcasting callable ``f(s, r, theta, t)``;
    channels left as ``None`` are unavailable and requesting them raises
    :class:`CapabilityError`.
    """

    value: Callable
    ds: Optional[Callable] = None
    dr: Optional[Callable] = None
    dth: Optional[Callable] = None
    dt: Optional[Callable] = None
    dtt: Optional[Callable] = None
    lap: Optional[Callable] = None
    name: str = "field"

    def channel(self, name: str) -> Callable:
        fn = getattr(self, name, None) if name in CHANNELS else None
        if fn is None:
            raise CapabilityError(f"field {self.name!r} has no {name!r} channel")
        return fn

    def require(self, *names: str) -> None:
        for n in names:
            self.channel(n)

    def has(self, name: str) -> bool:
        return getattr(self, name, None) is not None

    def __call__(self, s, r, theta, t=0.0, channel: str = "value"):
        return np.asarray(self.channel(channel)(s, r, theta, t), dtype=float) + 0.0 * (
            np.asarray(s, float) + np.asarray(r, float) + np.asarray(theta, float)
        )

    def time_derivative(self) -> "AnalyticField":
        """Field phi_t, carrying whatever channels can be read off (value, dt)."""
        self.require("dt")
        return AnalyticField(value=self.dt, dt=self.dtt, name=f"d/dt {self.name}")


@dataclass
class WallTrace:
    """Values g(s, theta) on the wall r = R(s), sampled on (ns, ntheta) nodes."""

    s: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    dt: Optional[np.ndarray] = None

    def __post_init__(self):
        shape = (len(self.s), len(self.theta))
        if self.values.shape != shape or (self.dt is not None and self.dt.shape != shape):
            raise ValueError(f"wall trace arrays must have shape {shape}")

    @classmethod
    def from_field(cls, f, geom: TubeGeometry, s, n_theta: int = 32, t: float = 0.0) -> "WallTrace":
        s = np.atleast_1d(np.asarray(s, float))
        th, _ = theta_nodes(n_theta)
        S, TH = s[:, None], th[None, :]
        R = geom.R(s)[:, None]
        dt = f(S, R, TH, t, channel="dt") if f.has("dt") else None
        return cls(s, th, f(S, R, TH, t), dt)


def _fd4_matrix(n: int, h: float, periodic: bool = False) -> np.ndarray:
    """Fourth-order first-derivative matrix on a uniform grid."""
    D = np.zeros((n, n))
    c = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    if periodic:
        for i in range(n):
            for k, off in enumerate(range(-2, 3)):
                D[i, (i + off) % n] += c[k]
        return D
    one_sided = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    near = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * h)
    for i in range(2, n - 2):
        D[i, i - 2 : i + 3] = c
    D[0, :5] = one_sided
    D[1, :5] = near
    D[-1, -5:] = -one_sided[::-1]
    D[-2, -5:] = -near[::-1]
    return D


def _barycentric_diff_matrix(x: np.ndarray) -> np.ndarray:
    n = len(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass
class SampledField:
    """Field sampled on a :class:`TubeGrid` at discrete times.

    ``values`` has shape (nt, ns, nr, ntheta).  Spatial derivatives are
    reconstructed on the grid: fourth-order differences in s and theta,
    barycentric differentiation on the Gauss nodes in r.  Time channels are
    only available when stored explicitly.
    """

    grid: TubeGrid
    times: np.ndarray
    values: np.ndarray
    dt: Optional[np.ndarray] = None
    dtt: Optional[np.ndarray] = None
    name: str = "sampled"

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, float))
        g = self.grid
        shape = (len(self.times), g.ns, g.nr, g.ntheta)
        for arr in (self.values, self.dt, self.dtt):
            if arr is not None and arr.shape != shape:
                raise ValueError(f"sampled arrays must have shape {shape}, got {arr.shape}")

    @classmethod
    def from_analytic(cls, f: AnalyticField, grid: TubeGrid, times) -> "SampledField":
        times = np.atleast_1d(np.asarray(times, float))
        S, r, TH, _ = grid.mesh()
        T = times[:, None, None, None]
        vals = f(S[None], r[None], TH[None], T)
        dt = f(S[None], r[None], TH[None], T, channel="dt") if f.has("dt") else None
        dtt = f(S[None], r[None], TH[None], T, channel="dtt") if f.has("dtt") else None
        return cls(grid, times, vals, dt, dtt, name=f.name)

    def has(self, name: str) -> bool:
        return name in ("value", "ds", "dr", "dth") or getattr(self, name, None) is not None

    def time_index(self, t: float) -> int:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if len(idx) == 0:
            raise DomainError(f"time {t} is not a stored sample time")
        return int(idx[0])

    def on_grid(self, channel: str, t: float) -> np.ndarray:
        """Channel values at every grid node, shape (ns, nr, ntheta)."""
        it = self.time_index(t)
        g = self.grid
        v = self.values[it]
        if channel == "value":
            return v
        if channel in ("dt", "dtt"):
            arr = getattr(self, channel)
            if arr is None:
                raise CapabilityError(f"sampled field has no stored {channel!r} channel")
            return arr[it]
        rho, _ = g.unit_r
        R = g.geom.R(g.s)[:, None, None]
        d_rho = np.einsum("ij,sjk->sik", _barycentric_diff_matrix(rho), v)
        dr = d_rho / R
        if channel == "dr":
            return dr
        if channel == "dth":
            return np.einsum("ij,srj->sri", _fd4_matrix(g.ntheta, 2 * np.pi / g.ntheta, periodic=True), v)
        if channel == "ds":
            # derivative along fixed rho = r / R(s), corrected to fixed r
            along = np.einsum("ij,jrk->irk", _fd4_matrix(g.ns, g.ds), v)
            dR = g.geom.dR(g.s)[:, None, None]
            return along - rho[None, :, None] * dR * dr
        raise CapabilityError(f"sampled field has no {channel!r} channel")

    def wall_trace(self, t: float) -> WallTrace:
        it = self.time_index(t)
        g = self.grid
        rho, _ = g.unit_r
        th, _ = g.theta
        interp = BarycentricInterpolator(rho, self.values[it], axis=1)
        vals = interp(1.0)
        dt = None
        if self.dt is not None:
            dt = BarycentricInterpolator(rho, self.dt[it], axis=1)(1.0)
        return WallTrace(g.s, th, vals, dt)

    def to_csv(self, path) -> None:
        g = self.grid
        S, r, TH, _ = g.mesh()
        S, r, TH = np.broadcast_arrays(S, r, TH)
        header = ["s", "r", "theta", "t", "value"]
        extra = [(n, a) for n, a in (("dvalue_dt", self.dt), ("d2value_dt2", self.dtt)) if a is not None]
        header += [n for n, _ in extra]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for it, t in enumerate(self.times):
                cols = [S.ravel(), r.ravel(), TH.ravel(), np.full(S.size, t), self.values[it].ravel()]
                cols += [a[it].ravel() for _, a in extra]
                for row in zip(*cols):
                    w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, grid: TubeGrid) -> "SampledField":
        data = np.genfromtxt(path, delimiter=",", names=True)
        times = np.unique(data["t"])
        shape = (len(times), grid.ns, grid.nr, grid.ntheta)
        names = data.dtype.names
        def col(n):
            return data[n].reshape(shape) if n in names else None
        return cls(grid, times, col("value"), col("dvalue_dt"), col("d2value_dt2"))


# ---------------------------------------------------------------------------
# Differential operators
# ---------------------------------------------------------------------------


def tube_gradient(f, geom: TubeGeometry, s, r, theta, t=0.0):
    """Frame components (D1 f, D2 f, D3 f) of grad f along (t, n, b)."""
    r = np.asarray(r, float)
    if np.any(r <= 0):
        raise PoleError("tube gradient requested at the coordinate pole r = 0")
    xi = curvature_factor(geom, s, r, theta)
    fs = f(s, r, theta, t, channel="ds")
    fr = f(s, r, theta, t, channel="dr")
    fth = f(s, r, theta, t, channel="dth")
    c, sn = np.cos(theta), np.sin(theta)
    return xi * fs, c * fr - sn / r * fth, sn * fr + c / r * fth


def grad_inv_xi(geom: TubeGeometry, s, r, theta):
    """Frame components of grad(1 / Xi) = -t r kappa' Xi cos(theta) - n kappa."""
    xi = curvature_factor(geom, s, r, theta)
    c = np.cos(theta)
    d1 = -np.asarray(r) * geom.dkappa(s) * xi * c
    d2 = -geom.kappa(s) + 0.0 * d1
    return d1, d2, np.zeros_like(d1)


def wall_normal_derivative(f, geom: TubeGeometry, s, theta, t=0.0, form: str = "exact"):
    """Exterior normal derivative nu . grad f on the wall r = R(s).

    ``form="exact"`` uses the true wall normal, proportional to
    -R' t + (1 - R kappa cos(theta)) e_r; ``form="weight"`` uses the
    circumferential weight W(s) with (1 - kappa R) in place of
    (1 - R kappa cos(theta)).  The two agree when kappa = 0.
    """
    R = geom.R(s)
    dR = geom.dR(s)
    k = geom.kappa(s)
    xi = curvature_factor(geom, s, R, theta)
    fs = f(s, R, theta, t, channel="ds")
    fr = f(s, R, theta, t, channel="dr")
    if form == "exact":
        dens = wall_density(geom, s, theta)
        radial = 1.0 - R * k * np.cos(theta)
    elif form == "weight":
        dens = wall_weight(geom, s)
        radial = 1.0 - k * R
    else:
        raise ValueError(f"unknown normal-derivative form {form!r}")
    if np.any(np.asarray(dens) <= 0):
        raise DegenerateWallError("wall metric vanishes; normal undefined")
    return R / dens * (-dR * xi * fs + radial * fr)


def end_normal_derivative(f, geom: TubeGeometry, end: int, r, theta, t=0.0):
    """Exterior normal derivative on the end disk: -Xi d/ds at s=0, +Xi d/ds at s=1."""
    if end not in (0, 1):
        raise DomainError("end must be 0 or 1")
    s = float(end)
    xi = curvature_factor(geom, s, r, theta)
    sign = -1.0 if end == 0 else 1.0
    return sign * xi * f(s, r, theta, t, channel="ds")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def integrate_disk(g: Callable, geom: TubeGeometry, s, nr: int = 8, ntheta: int = 16):
    """Integral of g(s, r, theta) over each disk Gamma(s) with dA = r dr dtheta."""
    grid = TubeGrid(geom, ns=2, nr=nr, ntheta=ntheta)
    scalar = np.ndim(s) == 0
    S, r, TH, dA = grid.mesh(s)
    out = np.sum(g(S, r, TH) * dA, axis=(1, 2))
    return out[0] if scalar else out


def integrate_wall(g: Callable, geom: TubeGeometry, s0: float, s1: float, ns: int = 64,
                   ntheta: int = 32, rule: str = "gauss"):
    """Integral of g(s, theta) over the wall portion s0 < s < s1 (exact surface element)."""
    s, ws = s_rule(s0, s1, ns, rule)
    th, wth = theta_nodes(ntheta)
    S, TH = s[:, None], th[None, :]
    dens = wall_density(geom, S, TH)
    return float(np.sum(g(S, TH) * dens * ws[:, None] * wth[None, :]))


def integrate_volume(g: Callable, geom: TubeGeometry, s0: float, s1: float, ns: int = 64,
                     nr: int = 8, ntheta: int = 16, rule: str = "gauss"):
    """Integral of g over Omega(s0, s1) with dV = (r / Xi) ds dr dtheta (Fubini over disks)."""
    s, ws = s_rule(s0, s1, ns, rule)
    def sliced(S, r, TH):
        return g(S, r, TH) / curvature_factor(geom, S, r, TH)
    return float(np.sum(ws * integrate_disk(sliced, geom, s, nr, ntheta)))


@dataclass(frozen=True)
class Disk:
    s: float


@dataclass(frozen=True)
class Wall:
    s0: float
    s1: float


@dataclass(frozen=True)
class Volume:
    s0: float
    s1: float


@dataclass(frozen=True)
class Quadrature:
    ns: int = 64
    nr: int = 8
    ntheta: int = 16
    rule: str = "gauss"


def integrate(f, geom: TubeGeometry, domain, t: float = 0.0, quad: Quadrature = Quadrature()):
    """Integrate a field, wall trace or plain callable over a disk, wall portion or volume.

    Callables are ``g(s, r, theta)`` for disks and volumes and ``g(s, theta)``
    for walls.  Analytic fields are evaluated at time ``t``; on a wall they are
    evaluated at r = R(s).
    """
    if isinstance(f, WallTrace):
        if not isinstance(domain, Wall):
            raise DomainError("wall traces can only be integrated over a wall")
        mask = (f.s >= domain.s0) & (f.s <= domain.s1)
        s = f.s[mask]
        _, wth = theta_nodes(len(f.theta))
        dens = wall_density(geom, s[:, None], f.theta[None, :])
        per_s = np.sum(f.values[mask] * dens * wth, axis=1)
        return float(np.trapezoid(per_s, s)) if hasattr(np, "trapezoid") else float(np.trapz(per_s, s))
    if isinstance(f, AnalyticField):
        field_ = f
        if isinstance(domain, Wall):
            def g(S, TH):
                return field_(S, geom.R(S), TH, t)
        else:
            def g(S, r, TH):
                return field_(S, r, TH, t)
    else:
        g = f
    if isinstance(domain, Disk):
        return integrate_disk(g, geom, domain.s, quad.nr, quad.ntheta)
    if isinstance(domain, Wall):
        return integrate_wall(g, geom, domain.s0, domain.s1, quad.ns, quad.ntheta, quad.rule)
    if isinstance(domain, Volume):
        return integrate_volume(g, geom, domain.s0, domain.s1, quad.ns, quad.nr, quad.ntheta, quad.rule)
    raise DomainError(f"unknown integration domain {domain!r}")
