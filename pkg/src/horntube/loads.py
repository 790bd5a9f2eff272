"""Load terms F, G, H that make the planar average an exact loaded-Webster solution.

For a potential phi on the tube let  abar = A phi  (disk average) and
bbar = B phi  (wall average).  Then, weakly in s,

    (1/A) d_s(A d_s abar) - (2 pi alpha W / A) d_t abar - d_tt abar / (c Sigma)^2 = F + G + H

with

    F = -(1/A) d_s [ A' (abar - bbar) ]
    G = -(2 pi alpha W / A) d_t (abar - bbar)
    H = (1/A) int Xi^-1 grad(Xi^-1) . grad phi dA + (1/A) int E lap(phi) dA
        - (alpha W R kappa / A) int phi_t(s, R, theta) cos(theta) dtheta
        + (alpha / A) int phi_t (1 - R kappa cos theta) (Wexact(theta) - W) dtheta

where E = Xi^-2 - Sigma^-2.  The last summand accounts for the exact wall
surface density and vanishes when alpha = 0 or kappa = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import Profile1D, planar_average, wall_average
from .errors import CapabilityError, ParameterError
from .fieldops import grad_inv_xi, integrate_disk, theta_nodes, tube_gradient
from .geometry import TubeGeometry, curvature_factor, sound_correction, wall_density, wall_weight


def error_function(geom: TubeGeometry, s, r, theta):
    """E = Xi^-2 - Sigma^-2 = -2 r kappa cos(theta) + kappa^2 (r^2 cos^2(theta) - R^2 / 4)."""
    k = geom.kappa(s)
    c = np.cos(theta)
    return -2.0 * r * k * c + k**2 * (r**2 * c**2 - geom.R(s) ** 2 / 4.0)


@dataclass
class LoadTerms:
    """F, G, H on an s-grid at time t, with the individual summands of H."""

    s: np.ndarray
    t: float
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    parts: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.F + self.G + self.H

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.F)), np.max(np.abs(self.G)), np.max(np.abs(self.H))))


def _s(s):
    return np.atleast_1d(np.asarray(s, float))


def average_gap(f, geom: TubeGeometry, t: float, s, nr: int = 8, ntheta: int = 16, channel: str = "value"):
    """abar - bbar for the given channel of f."""
    s = _s(s)
    a = planar_average(f, geom, t, s, nr, ntheta, channel=channel).values
    b = wall_average(f, geom, t, s, ntheta=2 * ntheta, channel=channel).values
    return a - b


def load_F_flux(f, geom: TubeGeometry, t: float, s, nr: int = 8, ntheta: int = 16):
    """The bracket A'(abar - bbar) whose s-derivative defines F (used in weak pairings)."""
    s = _s(s)
    return geom.area_derivative(s) * average_gap(f, geom, t, s, nr, ntheta)


def load_F(f, geom: TubeGeometry, t: float, s, nr: int = 8, ntheta: int = 16, method: str = "analytic"):
    """Strong F = -(1/A) d_s [A'(abar - bbar)].

    ``method="analytic"`` differentiates the bracket with the intertwining
    identity for abar and the chain rule d_s bbar = B(phi_s + R' phi_r);
    ``method="fd"`` applies fourth-order differences to the bracket on the
    (uniform) s-grid.  The latter is post-processing only.
    """
    s = _s(s)
    if not (f.has("ds") and f.has("dr")):
        raise CapabilityError("F needs ds and dr channels for the wall trace derivative")
    A = geom.area(s)
    if method == "fd":
        from .fieldops import _fd4_matrix

        flux = load_F_flux(f, geom, t, s, nr, ntheta)
        return -(_fd4_matrix(len(s), s[1] - s[0]) @ flux) / A
    gap = average_gap(f, geom, t, s, nr, ntheta)
    mean_ds = planar_average(f, geom, t, s, nr, ntheta, channel="ds").values
    wall = wall_average(f, geom, t, s, ntheta=2 * ntheta).values
    mean = planar_average(f, geom, t, s, nr, ntheta).values
    dA = geom.area_derivative(s)
    dmean = mean_ds + dA / A * (wall - mean)
    th, _ = theta_nodes(2 * ntheta)
    S, TH = s[:, None], th[None, :]
    R = geom.R(S)
    dwall = np.mean(f(S, R, TH, t, channel="ds") + geom.dR(S) * f(S, R, TH, t, channel="dr"), axis=1)
    return -(geom.area_second_derivative(s) * gap + dA * (dmean - dwall)) / A


def load_G(f, geom: TubeGeometry, alpha: float, t: float, s, nr: int = 8, ntheta: int = 16):
    """G = -(2 pi alpha W / A) d_t (abar - bbar)."""
    if alpha < 0:
        raise ParameterError("wall admittance alpha must be non-negative")
    s = _s(s)
    if alpha == 0:
        return np.zeros_like(s)
    gap_t = average_gap(f, geom, t, s, nr, ntheta, channel="dt")
    return -2.0 * np.pi * alpha * wall_weight(geom, s) / geom.area(s) * gap_t


def load_H(f, geom: TubeGeometry, alpha: float, c: float, t: float, s, nr: int = 8, ntheta: int = 16,
           laplacian: str = "lap", wall_measure: str = "exact", parts: bool = False,
           form: str = "derived"):
    """H assembled from the curvature-gradient, error-function and wall summands.

    ``laplacian`` selects the channel used for lap(phi): ``"lap"`` reads the
    Laplacian channel, ``"dtt"`` substitutes phi_tt / c^2 (equal for exact
    wave solutions).  ``wall_measure="weight"`` drops the exact-surface
    correction and keeps only the circumferential-weight form.

    ``form="displayed"`` reproduces the literal published expression: the
    curvature integral without the 1/A factor, the error-function integral
    with a minus sign and no surface correction.  It does not close the
    averaged balance on curved tubes and is kept for comparison only.
    """
    if alpha < 0:
        raise ParameterError("wall admittance alpha must be non-negative")
    s = _s(s)
    f.require("ds", "dr", "dth")
    if laplacian == "lap":
        f.require("lap")
        def lap(S, r, TH):
            return f(S, r, TH, t, channel="lap")
    elif laplacian == "dtt":
        f.require("dtt")
        def lap(S, r, TH):
            return f(S, r, TH, t, channel="dtt") / c**2
    else:
        raise ValueError(f"unknown laplacian channel {laplacian!r}")
    A = geom.area(s)

    def curvature_term(S, r, TH):
        g1, g2, g3 = tube_gradient(f, geom, S, r, TH, t)
        q1, q2, q3 = grad_inv_xi(geom, S, r, TH)
        return (q1 * g1 + q2 * g2 + q3 * g3) / curvature_factor(geom, S, r, TH)

    h1 = integrate_disk(curvature_term, geom, s, nr, ntheta) / A
    h2 = integrate_disk(lambda S, r, TH: error_function(geom, S, r, TH) * lap(S, r, TH), geom, s, nr, ntheta) / A
    h3 = np.zeros_like(s)
    h4 = np.zeros_like(s)
    if alpha > 0:
        f.require("dt")
        th, wth = theta_nodes(2 * ntheta)
        S, TH = s[:, None], th[None, :]
        R = geom.R(S)
        k = geom.kappa(S)
        ft = f(S, R, TH, t, channel="dt")
        W = wall_weight(geom, S)
        h3 = -alpha * (W * R * k)[:, 0] / A * np.sum(ft * np.cos(TH) * wth, axis=1)
        if wall_measure == "exact":
            corr = (1.0 - R * k * np.cos(TH)) * (wall_density(geom, S, TH) - W)
            h4 = alpha / A * np.sum(ft * corr * wth, axis=1)
        elif wall_measure != "weight":
            raise ValueError(f"unknown wall measure {wall_measure!r}")
    if form == "displayed":
        h1, h2, h4 = h1 * A, -h2, np.zeros_like(s)
    elif form != "derived":
        raise ValueError(f"unknown H form {form!r}")
    H = h1 + h2 + h3 + h4
    if parts:
        return H, {"curvature": h1, "error": h2, "wall_cos": h3, "wall_measure": h4}
    return H


def compute_loads(f, geom: TubeGeometry, alpha: float, c: float, t: float, s, nr: int = 8, ntheta: int = 16,
                  laplacian: str = "lap", wall_measure: str = "exact", f_method: str = "analytic") -> LoadTerms:
    s = _s(s)
    F = load_F(f, geom, t, s, nr, ntheta, method=f_method)
    G = load_G(f, geom, alpha, t, s, nr, ntheta)
    H, parts = load_H(f, geom, alpha, c, t, s, nr, ntheta, laplacian, wall_measure, parts=True)
    return LoadTerms(s, t, F, G, H, parts)


def defect_source(ms, geom: TubeGeometry, c: float, t: float, s, nr: int = 8, ntheta: int = 16,
                  laplacian: str = "lap"):
    """Extra load S making the loaded Webster identity exact for a non-solution phi.

    With PDE defect d = phi_tt / c^2 - lap(phi) and wall defect
    b = d phi / d nu + alpha phi_t, the planar average satisfies the loaded
    equation with right-hand side F + G + H + S where

        S = -(1/A) [ int Xi^-1 b Wexact dtheta + int Xi^-2 d dA ]          (H built from phi_tt / c^2)
        S = -(1/A) [ int Xi^-1 b Wexact dtheta + Sigma^-2 int d dA ]      (H built from lap phi)

    The identity is linear in (d, b), so S vanishes for exact solutions.
    """
    s = _s(s)
    A = geom.area(s)
    sigma, _ = sound_correction(geom, s, c)
    th, wth = theta_nodes(2 * ntheta)
    S, TH = s[:, None], th[None, :]
    R = geom.R(S)
    wall = np.sum(ms.wall_defect(S, TH, t) / curvature_factor(geom, S, R, TH) * wall_density(geom, S, TH) * wth, axis=1)
    if laplacian == "dtt":
        vol = integrate_disk(lambda S_, r, TH_: ms.pde_defect(S_, r, TH_, t) / curvature_factor(geom, S_, r, TH_) ** 2,
                             geom, s, nr, ntheta)
    else:
        vol = integrate_disk(lambda S_, r, TH_: ms.pde_defect(S_, r, TH_, t), geom, s, nr, ntheta) / sigma**2
    return -(wall + vol) / A
