"""Time-domain solver for Webster's horn equation with curvature-corrected sound speed.

On 0 < s < 1 the potential psi solves

    psi_tt = c(s)^2 [ (1/A)(A psi_s)_s - (2 pi alpha W / A) psi_t - L(s, t) ]

with c(s) = c Sigma(s), an optional load L = F + G + H, the scattering port

    -c psi_s(0, t) + psi_t(0, t) = 2 sqrt(c / (rho A(0))) u(t)
    -c psi_s(0, t) - psi_t(0, t) = 2 sqrt(c / (rho A(0))) y(t)

and psi(1, t) = 0.  Space is discretised by a summation-by-parts finite
difference scheme (lumped masses h_i A_i / c_i^2, half cell at the port) so
the port condition enters as a natural boundary term; time stepping is
leapfrog with the damping and port terms centred over two time levels.
The discrete energy of the scheme obeys the port power balance exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .averaging import Profile1D
from .errors import ConfigError, DivergenceError, ParameterError
from .geometry import TubeGeometry, sound_correction, wall_weight

CFL_LIMIT = 0.95
PORTS = ("scattering", "neumann")


@dataclass
class LoadSeries:
    """Load totals F + G + H sampled at ``times`` on the solver nodes; linear in t between samples."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 2 or self.values.shape[0] != self.times.size:
            raise ValueError("load values must have shape (n_times, Ns)")

    @classmethod
    def from_terms(cls, terms) -> "LoadSeries":
        terms = list(terms)
        return cls(np.array([lt.t for lt in terms]), np.array([lt.total for lt in terms]))

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t))
        if i < self.times.size and abs(self.times[i] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.values[i]
        if i == 0 or i >= self.times.size:
            raise ValueError(f"load series does not cover t={t!r}")
        w = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1])
        return (1 - w) * self.values[i - 1] + w * self.values[i]


@dataclass
class SolverConfig:
    """Physical and numerical parameters.

    The geometry lives on s in [0, 1]; ``length`` is the physical length so the
    effective speed on the unit interval is c / length and the wall parameter
    becomes alpha * length.  ``dt=None`` picks dt = cfl * ds / c.
    """

    c: float = 1.0
    rho: float = 1.0
    alpha: float = 0.0
    Ns: int = 201
    dt: float | None = None
    T: float = 1.0
    length: float = 1.0
    cfl: float = 0.9
    port: str = "scattering"
    load_source: Callable | LoadSeries | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError("wall admittance alpha must be non-negative")
        if self.c <= 0 or self.rho <= 0 or self.length <= 0:
            raise ParameterError("c, rho and length must be positive")
        if self.Ns < 3:
            raise ParameterError("need at least 3 grid nodes")
        if self.port not in PORTS:
            raise ParameterError(f"port must be one of {PORTS}")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")

    @property
    def ds(self) -> float:
        return 1.0 / (self.Ns - 1)

    @property
    def c_eff(self) -> float:
        return self.c / self.length

    @property
    def alpha_eff(self) -> float:
        return self.alpha * self.length

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else self.cfl * self.ds / self.c_eff

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.time_step))

    def courant(self) -> float:
        return self.c_eff * self.time_step / self.ds


@dataclass
class BoundarySignals:
    t: float
    u: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.y)):
            raise ValueError("port signals must be finite")


@dataclass
class WebsterState:
    """psi and psi_t on the nodes at time t; ``psi[-1]`` is always 0.

    ``prev`` holds the leapfrog history (psi at the two previous levels) and is
    empty before the first step.
    """

    psi: Profile1D
    psi_t: Profile1D
    t: float = 0.0
    step: int = 0
    prev: tuple = ()
    signals: BoundarySignals | None = None


@dataclass
class Assembly:
    """Discrete operators on the uniform node set s_i = i h (Dirichlet node excluded)."""

    geom: TubeGeometry
    cfg: SolverConfig
    s: np.ndarray
    A: np.ndarray
    W: np.ndarray
    sigma: np.ndarray
    cs: np.ndarray
    mass: np.ndarray
    k_diag: np.ndarray
    k_off: np.ndarray
    damping: np.ndarray
    port: np.ndarray
    port_gain: float
    weights: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.mass.size

    def stiffness(self, psi: np.ndarray) -> np.ndarray:
        """K psi for psi on the free nodes."""
        out = self.k_diag * psi
        out[:-1] += self.k_off * psi[1:]
        out[1:] += self.k_off * psi[:-1]
        return out

    def webster_operator(self, psi) -> np.ndarray:
        """A^-1 (A psi')' at interior nodes 1..Ns-2 for a full nodal vector psi."""
        psi = np.asarray(psi, float)
        h = self.cfg.ds
        a_half = self.geom.area(self.s[:-1] + 0.5 * h)
        flux = a_half * np.diff(psi) / h
        return np.diff(flux) / (h * self.A[1:-1])

    def acceleration(self, psi, w, g: float, load) -> np.ndarray:
        """Semi-discrete psi_tt on the free nodes for velocity w and port drive g."""
        rhs = -self.stiffness(psi) - (self.damping + self.port) * w
        rhs[0] += self.port[0] * g
        if load is not None:
            rhs -= self.weights * self.A[:-1] * load[:-1]
        return rhs / self.mass

    def max_frequency_sq(self) -> float:
        """Largest eigenvalue of M^-1 K (exact, via the symmetric tridiagonal form)."""
        m = np.sqrt(self.mass)
        d = self.k_diag / self.mass
        e = self.k_off / (m[:-1] * m[1:])
        return float(eigvalsh_tridiagonal(d, e, select="i", select_range=(self.n - 1, self.n - 1))[0])


def assemble(geom: TubeGeometry, cfg: SolverConfig) -> Assembly:
    """Build masses, stiffness, damping and port terms; check the time step."""
    if cfg.courant() > CFL_LIMIT:
        raise ConfigError(f"CFL violated: c*dt/ds = {cfg.courant():.4g} > {CFL_LIMIT}")
    n_all = cfg.Ns
    h = cfg.ds
    s = np.linspace(0.0, 1.0, n_all)
    A = geom.area(s)
    W = wall_weight(geom, s)
    sigma, _ = sound_correction(geom, s, 1.0)
    c = cfg.c_eff
    cs = c * sigma
    weights = np.full(n_all - 1, h)
    weights[0] = 0.5 * h
    a_half = geom.area(s[:-1] + 0.5 * h)
    k_diag = a_half / h
    k_diag[1:] += a_half[:-1] / h
    k_off = -a_half[:-1] / h
    mass = weights * A[:-1] / cs[:-1] ** 2
    damping = weights * 2.0 * np.pi * cfg.alpha_eff * W[:-1]
    port = np.zeros(n_all - 1)
    if cfg.port == "scattering":
        port[0] = A[0] / c
    gain = 2.0 * math.sqrt(c / (cfg.rho * A[0]))
    asm = Assembly(geom, cfg, s, A, W, sigma, cs, mass, k_diag, k_off, damping, port, gain, weights)
    dt = cfg.time_step
    lam = asm.max_frequency_sq()
    if dt * dt * lam >= 4.0:
        raise ConfigError(f"time step unstable: dt^2 * max(M^-1 K) = {dt * dt * lam:.4g} >= 4")
    return asm


def _input_at(u, t: float, n: int) -> float:
    if u is None:
        return 0.0
    if callable(u):
        return float(u(t))
    return float(u[n])


def _load_at(asm: Assembly, t: float, loads):
    src = loads if loads is not None else asm.cfg.load_source
    if src is None:
        return None
    vals = np.asarray(src(t), float)
    if vals.shape != (asm.cfg.Ns,):
        raise ValueError(f"load vector must have length {asm.cfg.Ns}")
    return vals


def initial_state(asm: Assembly, psi0=None, psi_t0=None, t0: float = 0.0) -> WebsterState:
    """State from nodal arrays or callables of s; requires psi0(1) = 0."""
    def nodal(x):
        if x is None:
            return np.zeros(asm.cfg.Ns)
        v = x(asm.s) if callable(x) else np.asarray(x, float)
        return np.broadcast_to(np.asarray(v, float), asm.s.shape).copy()

    p, pt = nodal(psi0), nodal(psi_t0)
    scale = max(1.0, float(np.max(np.abs(p))))
    if abs(p[-1]) > 1e-10 * scale or abs(pt[-1]) > 1e-10 * max(1.0, float(np.max(np.abs(pt)))):
        raise ParameterError("initial data must vanish at s = 1")
    p[-1] = pt[-1] = 0.0
    return WebsterState(Profile1D(asm.s, p, "psi"), Profile1D(asm.s, pt, "psi_t"), t0)


def output_signal(asm: Assembly, u: float, w0: float) -> float:
    """y from the port relation, given the boundary velocity psi_t(0)."""
    if asm.cfg.port != "scattering":
        return 0.0
    return u - 2.0 * w0 / asm.port_gain


def apply_boundary(asm: Assembly, state: WebsterState, u: float):
    """Boundary rows and output sample.

    Returns ``({0: (coeff, rhs), Ns-1: (1, 0)}, y)``: at the port the row gains
    the term coeff * psi_t(0) = rhs (coefficient A(0)/c, right side
    A(0)/c * 2 sqrt(c/(rho A(0))) u) which replaces the eliminated ghost node;
    the outlet row pins psi = 0.  y uses the state's psi_t(0).
    """
    g = asm.port_gain * u if asm.cfg.port == "scattering" else 0.0
    rows = {0: (asm.port[0], asm.port[0] * g), asm.cfg.Ns - 1: (1.0, 0.0)}
    return rows, output_signal(asm, u, float(state.psi_t.values[0]))


def step(asm: Assembly, state: WebsterState, u: float, loads=None) -> WebsterState:
    """Advance one time step; ``u`` is the input at the current time level."""
    dt = asm.cfg.time_step
    t = state.t
    g = asm.port_gain * u if asm.cfg.port == "scattering" else 0.0
    load = _load_at(asm, t, loads)
    psi = state.psi.values[:-1]
    if not state.prev:
        # Taylor start consistent with the semi-discrete system
        v = state.psi_t.values[:-1]
        acc = asm.acceleration(psi, v, g, load)
        new = psi + dt * v + 0.5 * dt * dt * acc
        new_t = v + dt * acc
        w0 = float(v[0])
        prev = (psi,)
    else:
        old = state.prev[0]
        lhs = asm.mass / dt**2 + (asm.damping + asm.port) / (2 * dt)
        rhs = (asm.mass * (2 * psi - old) / dt**2 + (asm.damping + asm.port) * old / (2 * dt)
               - asm.stiffness(psi))
        rhs[0] += asm.port[0] * g
        if load is not None:
            rhs -= asm.weights * asm.A[:-1] * load[:-1]
        new = rhs / lhs
        new_t = (3 * new - 4 * psi + old) / (2 * dt)
        w0 = float((new[0] - old[0]) / (2 * dt))
        prev = (psi, old)
    if not (np.all(np.isfinite(new)) and np.all(np.isfinite(new_t))):
        raise DivergenceError(state.step + 1, f"non-finite values at t={t + dt:.6g}")
    y = output_signal(asm, u, w0)
    return WebsterState(
        Profile1D(asm.s, np.append(new, 0.0), "psi"),
        Profile1D(asm.s, np.append(new_t, 0.0), "psi_t"),
        t + dt,
        state.step + 1,
        prev,
        BoundarySignals(t, u, y),
    )


def energy(state: WebsterState, asm: Assembly) -> float:
    """(rho/2) int A (psi_s^2 + psi_t^2 / c(s)^2) ds by the trapezoid rule."""
    psi = state.psi.values
    ps = np.gradient(psi, asm.s, edge_order=2)
    dens = asm.A * (ps**2 + state.psi_t.values ** 2 / asm.cs**2)
    return float(0.5 * asm.cfg.rho * np.trapezoid(dens, asm.s))


def discrete_energy(asm: Assembly, psi_new: np.ndarray, psi_old: np.ndarray) -> float:
    """Leapfrog energy at the half level between two consecutive solutions.

    rho [ v^T M v / 2 + psi_new^T K psi_old / 2 ] with v the difference
    quotient; it changes per step by dt (u^2 - y^2) minus damping work.
    """
    dt = asm.cfg.time_step
    a, b = psi_new[:-1], psi_old[:-1]
    v = (a - b) / dt
    return float(asm.cfg.rho * 0.5 * (np.dot(asm.mass * v, v) + np.dot(a, asm.stiffness(b))))


@dataclass
class RunResult:
    times: np.ndarray
    psi: np.ndarray
    psi_t: np.ndarray
    signal_times: np.ndarray
    u: np.ndarray
    y: np.ndarray
    energy: np.ndarray
    discrete_energy: np.ndarray
    s: np.ndarray
    final: WebsterState

    def snapshot(self, k: int) -> tuple[Profile1D, Profile1D]:
        return Profile1D(self.s, self.psi[k], "psi"), Profile1D(self.s, self.psi_t[k], "psi_t")


def run(geom: TubeGeometry, cfg: SolverConfig, u=None, psi0=None, psi_t0=None, loads=None,
        asm: Assembly | None = None) -> RunResult:
    """Integrate to cfg.T.

    ``u`` is a callable of t or an array of samples at t_n; ``loads`` (or
    cfg.load_source) a callable t -> nodal load total or a LoadSeries.
    ``energy`` is recorded at cadence; ``discrete_energy[n]`` is the leapfrog
    energy between levels n and n+1 and ``u``, ``y`` are sampled at every t_n.
    """
    asm = asm or assemble(geom, cfg)
    state = initial_state(asm, psi0, psi_t0)
    n_steps = cfg.n_steps
    times, psis, psits, energies = [0.0], [state.psi.values], [state.psi_t.values], [energy(state, asm)]
    us, ys, ts, denergy = [], [], [], []
    for n in range(n_steps):
        un = _input_at(u, state.t, n)
        new = step(asm, state, un, loads)
        us.append(new.signals.u)
        ys.append(new.signals.y)
        ts.append(new.signals.t)
        denergy.append(discrete_energy(asm, new.psi.values, state.psi.values))
        state = new
        if (n + 1) % cfg.record_every == 0 or n + 1 == n_steps:
            times.append(state.t)
            psis.append(state.psi.values)
            psits.append(state.psi_t.values)
            energies.append(energy(state, asm))
    return RunResult(np.array(times), np.array(psis), np.array(psits), np.array(ts), np.array(us),
                     np.array(ys), np.array(energies), np.array(denergy), asm.s, state)


def port_pressure(result: RunResult, asm: Assembly) -> np.ndarray:
    """Inlet pressure rho psi_t(0, t_n) reconstructed from the port signals."""
    return asm.cfg.rho * asm.port_gain * (result.u - result.y) / 2.0


def resonance_frequencies(result: RunResult, asm: Assembly, n_peaks: int = 1, pad: int = 16,
                          fmax: float | None = None) -> np.ndarray:
    """Peaks of |P / U|, the inlet pressure response to the port input, in Hz.

    With an absorbing port the outgoing wave y is a delayed copy of the input,
    so the resonances of the closed-open tube appear in u - y.
    """
    t = result.signal_times
    dt = t[1] - t[0]
    n = pad * t.size
    U = np.fft.rfft(result.u, n)
    P = np.fft.rfft(port_pressure(result, asm), n)
    f = np.fft.rfftfreq(n, dt)
    ok = np.abs(U) > 1e-3 * np.max(np.abs(U))
    if fmax is not None:
        ok &= f <= fmax
    mag = np.where(ok, np.abs(P) / np.where(ok, np.abs(U), 1.0), 0.0)
    inner = np.flatnonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:]) & ok[1:-1]) + 1
    peaks = []
    for i in inner:
        # parabolic refinement of the discrete peak
        a, b, c = mag[i - 1], mag[i], mag[i + 1]
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
        peaks.append(f[i] + shift * (f[1] - f[0]))
        if len(peaks) == n_peaks:
            break
    return np.array(peaks)


def gaussian_pulse(t0: float, width: float, amplitude: float = 1.0):
    return lambda t: amplitude * np.exp(-(((np.asarray(t, float) - t0) / width) ** 2))


def with_dt(cfg: SolverConfig, **changes) -> SolverConfig:
    return replace(cfg, **changes)
