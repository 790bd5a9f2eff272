"""Numerical certification of the averaged-solution identities.

Each check compares two independently assembled sides of an identity for a
manufactured potential phi.  Generic (non-solution) fields carry their PDE
defect d = phi_tt / c^2 - lap phi and wall defect b = d phi / d nu + alpha phi_t
as known sources; every identity is linear in (d, b), so the compensated
forms are exact.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre

from .averaging import average_s_derivative, planar_average, planar_average_function, spectral_derivative, wall_average
from .errors import AlignmentError, PreconditionError, TestFunctionError
from .fieldops import (
    end_normal_derivative,
    grad_inv_xi,
    integrate_disk,
    integrate_volume,
    integrate_wall,
    s_rule,
    tube_gradient,
)
from .geometry import TubeGeometry, curvature_factor, sound_correction, wall_weight
from .loads import compute_loads, defect_source, load_F_flux, load_G, load_H
from .manufactured import ManufacturedSolution
from . import webster


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def observed_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    ok = err > 0
    if ok.sum() < 2:
        return float("inf")
    slope, _ = np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)
    return float(slope)


@dataclass
class ResidualReport:
    """Residuals per refinement level with the fitted order."""

    name: str
    h: np.ndarray
    residuals: np.ndarray
    order: float
    tolerance: float | None = None
    min_order: float | None = None
    monotone: bool = True
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, float)
        self.residuals = np.asarray(self.residuals, float)
        if np.any(np.diff(self.h) >= 0):
            raise ValueError("refinement levels must strictly refine (h decreasing)")

    @classmethod
    def from_levels(cls, name, h, residuals, tolerance=None, min_order=None, **details) -> "ResidualReport":
        res = np.asarray(residuals, float)
        return cls(name, h, res, observed_order(h, res), tolerance, min_order,
                   bool(np.all(np.diff(res) <= 0)), details)

    @property
    def final(self) -> float:
        return float(self.residuals[-1])

    @property
    def passed(self) -> bool:
        ok = True
        if self.tolerance is not None:
            ok &= self.final < self.tolerance
        if self.min_order is not None:
            ok &= self.order >= self.min_order
        return bool(ok)

    def summary(self) -> str:
        flag = "" if self.monotone else " (non-monotone)"
        tol = f" tol={self.tolerance:.1e}" if self.tolerance is not None else ""
        return (f"{self.name}: final={self.final:.3e} order={self.order:.2f}{flag}{tol} "
                f"-> {'pass' if self.passed else 'FAIL'}")

    def rows(self):
        return [(repr(float(h)), repr(float(r))) for h, r in zip(self.h, self.residuals)]


def _threads() -> int:
    env = os.environ.get("HORNTUBE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def convergence_study(scenario: Callable, ladder: Sequence, h: Sequence[float] | None = None,
                      name: str = "convergence", tolerance=None, min_order=None) -> ResidualReport:
    """Run ``scenario(level)`` for every ladder level in parallel and fit the order.

    Levels are independent, so they run on a thread pool capped by the
    HORNTUBE_THREADS environment variable.  ``h`` defaults to 1/(Ns-1) when
    levels are mappings with an ``Ns`` key or tuples whose first entry is Ns.
    """
    ladder = list(ladder)
    if len(ladder) < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if h is None:
        def ns(level):
            if isinstance(level, dict):
                return level["Ns"]
            return level if isinstance(level, (int, np.integer)) else level[0]
        h = [1.0 / (ns(level) - 1) for level in ladder]
    with ThreadPoolExecutor(max_workers=min(_threads(), len(ladder))) as pool:
        residuals = list(pool.map(scenario, ladder))
    return ResidualReport.from_levels(name, h, residuals, tolerance, min_order, ladder=ladder)


# ---------------------------------------------------------------------------
# Integrated balance
# ---------------------------------------------------------------------------


@dataclass
class BalanceResult:
    L: float
    rhs: float
    defect: float
    terms: dict


def _check_tag(phi: ManufacturedSolution, alpha, c, compensate):
    alpha = phi.alpha if alpha is None else alpha
    c = phi.c if c is None else c
    if compensate is None:
        compensate = not phi.exact
    if not compensate:
        if not phi.exact:
            raise PreconditionError(f"{phi.name!r} is not a wave-equation solution; enable defect compensation")
        if not (math.isclose(alpha, phi.alpha) and math.isclose(c, phi.c)):
            raise PreconditionError("alpha and c must match the manufactured solution")
    elif not (math.isclose(alpha, phi.alpha) and math.isclose(c, phi.c)):
        raise PreconditionError("defect compensation needs the solution's own alpha and c")
    return alpha, c, compensate


def integrated_balance(phi: ManufacturedSolution, s0: float, s1: float, t: float, alpha: float | None = None,
                       c: float | None = None, compensate: bool | None = None, ns: int = 32, nr: int = 8,
                       ntheta: int = 16, rule: str = "gauss") -> BalanceResult:
    """L(s0, s1) from the end, wall and inertia terms against the volume integral of grad(1/Xi) . grad phi."""
    geom = phi.geom
    alpha, c, compensate = _check_tag(phi, alpha, c, compensate)
    f = phi.field

    def ends(s):
        return integrate_disk(lambda S, r, TH: f(S, r, TH, t, channel="ds"), geom, s, nr, ntheta)

    term_i = float(ends(s1) - ends(s0))

    def wall_t(S, TH):
        R = geom.R(S)
        return f(S, R, TH, t, channel="dt") / curvature_factor(geom, S, R, TH)

    term_ii = integrate_wall(wall_t, geom, s0, s1, ns, 2 * ntheta, rule)

    def inertia(S, r, TH):
        return f(S, r, TH, t, channel="dtt") / (c**2 * curvature_factor(geom, S, r, TH) ** 2)

    s, ws = s_rule(s0, s1, ns, rule)
    term_iii = float(np.sum(ws * integrate_disk(inertia, geom, s, nr, ntheta)))
    L = term_i - alpha * term_ii - term_iii

    def grad_dot(S, r, TH):
        g = tube_gradient(f, geom, S, r, TH, t)
        q = grad_inv_xi(geom, S, r, TH)
        return q[0] * g[0] + q[1] * g[1] + q[2] * g[2]

    rhs = integrate_volume(grad_dot, geom, s0, s1, ns, nr, ntheta, rule)
    terms = {"i": term_i, "ii": term_ii, "iii": term_iii, "wall_defect": 0.0, "pde_defect": 0.0}
    defect = L - rhs
    if compensate:
        def wall_b(S, TH):
            R = geom.R(S)
            return phi.wall_defect(S, TH, t) / curvature_factor(geom, S, R, TH)

        terms["wall_defect"] = integrate_wall(wall_b, geom, s0, s1, ns, 2 * ntheta, rule)
        terms["pde_defect"] = float(np.sum(ws * integrate_disk(
            lambda S, r, TH: phi.pde_defect(S, r, TH, t) / curvature_factor(geom, S, r, TH) ** 2,
            geom, s, nr, ntheta)))
        defect += terms["wall_defect"] + terms["pde_defect"]
    return BalanceResult(L, rhs, float(defect), terms)


# ---------------------------------------------------------------------------
# Weak form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """Cosine-taper bump cos^p(pi (x - m) / w) on (m - w/2, m + w/2) with its derivative."""

    lo: float
    hi: float
    power: int = 2

    def __call__(self, x):
        x = np.asarray(x, float)
        m, w = 0.5 * (self.lo + self.hi), self.hi - self.lo
        arg = np.pi * (x - m) / w
        inside = np.abs(x - m) < 0.5 * w
        return np.where(inside, np.cos(arg) ** self.power, 0.0)

    def derivative(self, x):
        x = np.asarray(x, float)
        m, w = 0.5 * (self.lo + self.hi), self.hi - self.lo
        arg = np.pi * (x - m) / w
        inside = np.abs(x - m) < 0.5 * w
        p = self.power
        return np.where(inside, -p * np.cos(arg) ** (p - 1) * np.sin(arg) * np.pi / w, 0.0)


def bump_family(lo: float, hi: float, n: int = 5, width: float = 0.375, power: int = 4,
                snap: int = 16) -> list[Bump]:
    """n overlapping bumps inside (lo, hi), ``width`` a fraction of the span.

    Support endpoints are snapped to multiples of span / ``snap`` so that
    uniform grids with a multiple of ``snap`` intervals contain them as nodes.
    """
    span = hi - lo
    starts = np.linspace(1.0 / snap, 1.0 - 1.0 / snap - width, n)
    starts = np.round(starts * snap) / snap
    width = round(width * snap) / snap
    return [Bump(float(lo + a * span), float(lo + (a + width) * span), power) for a in starts]


def _check_support(bumps, lo, hi, what):
    for b in bumps:
        if b.lo <= lo or b.hi >= hi:
            raise TestFunctionError(f"{what} test function support [{b.lo}, {b.hi}] touches the boundary of ({lo}, {hi})")


def _weak_level(phi: ManufacturedSolution, alpha, c, T, s_bumps, t_bumps, ns, nt, nr, ntheta, compensate):
    geom = phi.geom
    f = phi.field
    s = np.linspace(0.0, 1.0, ns)
    ws = np.full(ns, 1.0 / (ns - 1))
    ws[[0, -1]] *= 0.5
    A = geom.area(s)
    W = wall_weight(geom, s)
    sigma, _ = sound_correction(geom, s, c)
    zs = np.array([b(s) for b in s_bumps])
    dzs = np.array([b.derivative(s) for b in s_bumps])
    x, wx = legendre.leggauss(nt)
    n_s, n_t = len(s_bumps), len(t_bumps)
    lhs = np.zeros((n_s, n_t))
    rhs = np.zeros((n_s, n_t))
    scale = np.zeros((n_s, n_t))
    for k, tb in enumerate(t_bumps):
        tt = tb.lo + 0.5 * (tb.hi - tb.lo) * (x + 1.0)
        wt = 0.5 * (tb.hi - tb.lo) * wx * tb(tt)
        for ti, wti in zip(tt, wt):
            mean_s = average_s_derivative(f, geom, ti, s, nr, ntheta).values
            mean_tt = planar_average(f, geom, ti, s, nr, ntheta, channel="dtt").values
            stiff = -mean_s * A * ws
            inert = -mean_tt * A / (c * sigma) ** 2 * ws
            pieces_l = [stiff @ dzs.T, inert @ zs.T]
            pieces_r = [load_F_flux(f, geom, ti, s, nr, ntheta) * ws @ dzs.T]
            if alpha > 0:
                mean_t = planar_average(f, geom, ti, s, nr, ntheta, channel="dt").values
                pieces_l.append(-2 * np.pi * alpha * W * mean_t * ws @ zs.T)
                pieces_r.append(load_G(f, geom, alpha, ti, s, nr, ntheta) * A * ws @ zs.T)
            pieces_r.append(load_H(f, geom, alpha, c, ti, s, nr, ntheta) * A * ws @ zs.T)
            if compensate:
                pieces_r.append(defect_source(phi, geom, c, ti, s, nr, ntheta) * A * ws @ zs.T)
            lhs[:, k] += wti * sum(pieces_l)
            rhs[:, k] += wti * sum(pieces_r)
            scale[:, k] += np.abs(wti) * sum(np.abs(p) for p in pieces_l + pieces_r)
    return lhs, rhs, scale


def weak_residual(phi: ManufacturedSolution, T: float, levels: Sequence[int] = (33, 65, 129, 257),
                  s_bumps: Sequence[Bump] | None = None, t_bumps: Sequence[Bump] | None = None,
                  alpha: float | None = None, c: float | None = None, compensate: bool | None = None,
                  nt: int = 8, nr: int = 8, ntheta: int = 16, tolerance: float | None = None,
                  min_order: float | None = None) -> ResidualReport:
    """Defect of the weak loaded-Webster identity for bump products zeta = b_j(s) g_k(t).

    Each level uses a composite trapezoid rule with ``levels[i]`` nodes in s;
    the time integral uses Gauss points on each bump support.  The residual
    per level is the largest relative defect |LHS - RHS| / scale over the
    family, scale being the sum of the magnitudes of the individual terms.
    """
    alpha, c, compensate = _check_tag(phi, alpha, c, compensate)
    s_bumps = list(s_bumps) if s_bumps is not None else bump_family(0.0, 1.0)
    t_bumps = list(t_bumps) if t_bumps is not None else bump_family(0.0, T)
    _check_support(s_bumps, 0.0, 1.0, "s")
    _check_support(t_bumps, 0.0, T, "t")
    residuals, absolute, sides = [], [], []
    for ns in levels:
        lhs, rhs, scale = _weak_level(phi, alpha, c, T, s_bumps, t_bumps, ns, nt, nr, ntheta, compensate)
        diff = np.abs(lhs - rhs)
        residuals.append(float(np.max(diff / np.maximum(scale, 1e-300))))
        absolute.append(float(np.max(diff)))
        sides.append(float(max(np.max(np.abs(lhs)), np.max(np.abs(rhs)))))
    h = [1.0 / (n - 1) for n in levels]
    return ResidualReport.from_levels(f"weak form ({phi.name})", h, residuals, tolerance, min_order,
                                      absolute=absolute, sides=sides, levels=list(levels))


# ---------------------------------------------------------------------------
# Boundary equivalence
# ---------------------------------------------------------------------------


@dataclass
class BoundaryReport:
    times: np.ndarray
    lhs_plus: np.ndarray
    lhs_minus: np.ndarray
    rhs_plus: np.ndarray
    rhs_minus: np.ndarray
    K: np.ndarray
    K_gap: np.ndarray
    xi_correction: np.ndarray
    strict: bool

    @property
    def defect(self) -> float:
        return float(max(np.max(np.abs(self.lhs_plus - self.rhs_plus)), np.max(np.abs(self.lhs_minus - self.rhs_minus))))

    @property
    def k_consistency(self) -> float:
        """Relative mismatch between K from its definition and K from the identity gap."""
        scale = max(float(np.max(np.abs(self.K))), 1e-300)
        return float(np.max(np.abs(self.K - self.K_gap)) / scale) if np.any(self.K) else float(np.max(np.abs(self.K_gap)))


def boundary_equivalence(phi: ManufacturedSolution, times, c: float | None = None, nr: int = 12,
                         ntheta: int = 32, degree: int = 24) -> BoundaryReport:
    """Compare the averaged inlet port quantities with -c dbar/ds +- dbar/dt - K.

    The left side is a disk quadrature of c d phi/d nu +- phi_t on Gamma(0).
    The right side takes d bar(phi)/ds at s = 0 from a Chebyshev fit of the
    planar average, independent of the end-disk quadrature on the left.
    K_gap, the value that closes the identity, uses the exact derivative of
    the disk integral in stretched coordinates r = R(s) x; neither route
    touches the wall trace, so K and K_gap are independent.  K follows its definition;
    K_gap is the value that closes the identity.  When kappa(0) != 0 the
    term (c/A) int phi_s (Xi - 1) dA is reported separately and included in
    the right side.
    """
    geom = phi.geom
    c = phi.c if c is None else c
    f = phi.field
    times = np.atleast_1d(np.asarray(times, float))
    A0 = float(geom.area(0.0))
    dA0 = float(geom.area_derivative(0.0))
    strict = bool(abs(geom.dR(0.0)) <= 1e-12 and abs(geom.kappa(0.0)) <= 1e-12)
    out = {k: [] for k in ("lp", "lm", "rp", "rm", "K", "Kg", "X")}
    for t in times:
        nu = integrate_disk(lambda S, r, TH: end_normal_derivative(f, geom, 0, r, TH, t), geom, 0.0, nr, ntheta) / A0
        ft = integrate_disk(lambda S, r, TH: f(S, r, TH, t, channel="dt"), geom, 0.0, nr, ntheta) / A0
        lp, lm = c * nu + ft, c * nu - ft
        mean = float(planar_average(f, geom, t, [0.0], nr, ntheta).values[0])
        wall = float(wall_average(f, geom, t, [0.0], ntheta=ntheta).values[0])
        avg = planar_average_function(f, geom, t, nr, ntheta)
        mean_s = float(spectral_derivative(avg, [0.0], (0.0, 1.0), degree)[0])
        mean_s_exact = float(average_s_derivative(f, geom, t, [0.0], nr, ntheta, method="stretched").values[0])
        K = c * dA0 / A0 * (mean - wall)
        X = c / A0 * integrate_disk(
            lambda S, r, TH: f(S, r, TH, t, channel="ds") * (curvature_factor(geom, S, r, TH) - 1.0),
            geom, 0.0, nr, ntheta)
        rp = -c * mean_s + ft - K - X
        rm = -c * mean_s - ft - K - X
        out["lp"].append(lp)
        out["lm"].append(lm)
        out["rp"].append(rp)
        out["rm"].append(rm)
        out["K"].append(K)
        out["Kg"].append(-c * mean_s_exact + ft - X - lp)
        out["X"].append(X)
    a = {k: np.array(v, float) for k, v in out.items()}
    return BoundaryReport(times, a["lp"], a["lm"], a["rp"], a["rm"], a["K"], a["Kg"], a["X"], strict)


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------


@dataclass
class TrackingError:
    linf: float
    l2: float
    times: np.ndarray
    error: np.ndarray


def averaged_profiles(phi: ManufacturedSolution, s, times, nr: int = 8, ntheta: int = 16) -> np.ndarray:
    return np.array([planar_average(phi.field, phi.geom, t, s, nr, ntheta).values for t in times])


def tracking_error(result: "webster.RunResult", phi: ManufacturedSolution, nr: int = 8,
                   ntheta: int = 16) -> TrackingError:
    """L-infinity and space-time L2 norms of psi - bar(phi) over the recorded history."""
    if result.psi.shape != (result.times.size, result.s.size):
        raise AlignmentError(f"history shape {result.psi.shape} does not match "
                             f"{result.times.size} times x {result.s.size} nodes")
    ref = averaged_profiles(phi, result.s, result.times, nr, ntheta)
    err = result.psi - ref
    linf = float(np.max(np.abs(err)))
    per_t = np.trapezoid(err**2, result.s, axis=1)
    l2 = float(np.sqrt(np.trapezoid(per_t, result.times))) if result.times.size > 1 else float(np.sqrt(per_t[0]))
    return TrackingError(linf, l2, result.times, err)


def inlet_input(phi: ManufacturedSolution, cfg: "webster.SolverConfig", nr: int = 8, ntheta: int = 16):
    """u(t) for which the port condition holds for bar(phi) (including K when A'(0) != 0)."""
    geom = phi.geom
    c = cfg.c_eff
    A0 = float(geom.area(0.0))
    gain = 2.0 * math.sqrt(c / (cfg.rho * A0))

    def u(t):
        ds = average_s_derivative(phi.field, geom, t, [0.0], nr, ntheta).values[0]
        dt = planar_average(phi.field, geom, t, [0.0], nr, ntheta, channel="dt").values[0]
        return (-c * ds + dt) / gain

    return u


def tracking_run(phi: ManufacturedSolution, cfg: "webster.SolverConfig", with_loads: bool = True,
                 nr: int = 8, ntheta: int = 16) -> "webster.RunResult":
    """Webster run fed with bar(phi)'s initial data and port input; loads F + G + H (+ S) optional."""
    geom = phi.geom
    if not (math.isclose(cfg.c_eff, phi.c) and math.isclose(cfg.alpha_eff, phi.alpha)):
        raise PreconditionError("solver c and alpha must match the manufactured solution")
    asm = webster.assemble(geom, cfg)
    s = asm.s
    psi0 = planar_average(phi.field, geom, 0.0, s, nr, ntheta).values
    psi_t0 = planar_average(phi.field, geom, 0.0, s, nr, ntheta, channel="dt").values
    loads = None
    if with_loads:
        def loads(t):
            total = compute_loads(phi, geom, phi.alpha, phi.c, t, s, nr, ntheta).total
            if not phi.exact:
                total = total + defect_source(phi, geom, phi.c, t, s, nr, ntheta)
            return total
    return webster.run(geom, cfg, u=inlet_input(phi, cfg, nr, ntheta), psi0=psi0, psi_t0=psi_t0,
                       loads=loads, asm=asm)
