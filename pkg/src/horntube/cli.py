"""Configuration-driven entry point.

    horntube <config.toml> [--scenario NAME] [--out DIR] [--quiet]

The config is a sectioned TOML file.  Every key is validated against
``SCHEMA`` before anything is computed; defaults are materialised and the
resolved config is echoed to ``<out>/resolved_config.toml``, which reproduces
the run when fed back in.  Geometry coefficients are dimensionless (lengths
in units of the tube length ``geometry.length``).

Exit codes: 0 pass, 1 criterion failure, 2 config error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import geometry as geo
from . import manufactured as mf
from . import verify, webster
from .errors import ConfigError, DivergenceError, HorntubeError

SCENARIOS = ("simulate", "verify-weak", "verify-boundary", "verify-balance", "track", "converge")
FAMILIES = ("cylinder", "cone", "arc", "planar", "spline")
INPUTS = ("none", "impulse", "gaussian", "tone", "csv")
FIELDS = ("auto", "plane-wave", "dirichlet-mode", "reflected-pulse", "spherical-wave", "spherical-pulse", "generic")


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# section -> key -> (python types, default, check, constraint text)
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "family": (str, "cylinder", lambda v: v in FAMILIES, f"one of {FAMILIES}"),
        "length": ((int, float), 1.0, _positive, "> 0"),
        "radius": ((int, float), 0.1, _positive, "> 0"),
        "slope": ((int, float), 0.1, lambda v: True, "a number"),
        "curvature": ((int, float), 0.0, lambda v: True, "a number"),
        "curvature_coeffs": (list, [], lambda v: all(isinstance(x, (int, float)) for x in v), "a list of numbers"),
        "radius_coeffs": (list, [], lambda v: all(isinstance(x, (int, float)) for x in v), "a list of numbers"),
        "centerline_csv": (str, "", lambda v: True, "a path"),
        "radius_csv": (str, "", lambda v: True, "a path"),
    },
    "physics": {
        "c": ((int, float), 343.0, _positive, "> 0"),
        "rho": ((int, float), 1.2, _positive, "> 0"),
        "alpha": ((int, float), 0.0, _nonneg, ">= 0"),
    },
    "discretization": {
        "Ns": (int, 201, lambda v: v >= 3, ">= 3"),
        "Nr": (int, 8, lambda v: v >= 1, ">= 1"),
        "Ntheta": (int, 16, lambda v: v >= 4, ">= 4"),
        "dt": ((int, float), 0.0, _nonneg, ">= 0 (0 selects dt from cfl)"),
        "cfl": ((int, float), 0.9, lambda v: 0 < v <= webster.CFL_LIMIT, f"in (0, {webster.CFL_LIMIT}]"),
        "T": ((int, float), 0.05, _positive, "> 0"),
    },
    "scenario": {
        "name": (str, "simulate", lambda v: v in SCENARIOS, f"one of {SCENARIOS}"),
        "port": (str, "scattering", lambda v: v in webster.PORTS, f"one of {webster.PORTS}"),
        "field": (str, "auto", lambda v: v in FIELDS, f"one of {FIELDS}"),
        "loads": (bool, True, lambda v: True, "true or false"),
    },
    "input": {
        "kind": (str, "impulse", lambda v: v in INPUTS, f"one of {INPUTS}"),
        "amplitude": ((int, float), 1.0, lambda v: True, "a number"),
        "t0": ((int, float), 0.0, _nonneg, ">= 0"),
        "width": ((int, float), 1e-4, _positive, "> 0"),
        "frequency": ((int, float), 500.0, _positive, "> 0"),
        "csv": (str, "", lambda v: True, "a path"),
    },
    "io": {
        "out_dir": (str, "horntube-out", lambda v: bool(v), "a non-empty path"),
        "cadence": (int, 10, lambda v: v >= 1, ">= 1"),
        "plot": (bool, False, lambda v: True, "true or false"),
    },
    "verify": {
        "levels": (list, [], lambda v: all(isinstance(x, int) and x >= 3 for x in v), "a list of integers >= 3"),
        "tolerance": ((int, float), 0.0, _nonneg, ">= 0 (0 selects the scenario default)"),
        "min_order": ((int, float), 1.7, lambda v: True, "a number"),
        "times": (list, [0.1, 0.3, 0.5], lambda v: all(isinstance(x, (int, float)) for x in v), "a list of numbers"),
        "s0": ((int, float), 0.1, lambda v: 0 <= v < 1, "in [0, 1)"),
        "s1": ((int, float), 0.9, lambda v: 0 < v <= 1, "in (0, 1]"),
        "t": ((int, float), 0.3, lambda v: True, "a number"),
    },
}


@dataclass
class RunConfig:
    data: dict
    source: Path | None = None

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def solver_config(self) -> webster.SolverConfig:
        g, p, d, sc, io = (self.data[k] for k in ("geometry", "physics", "discretization", "scenario", "io"))
        return webster.SolverConfig(c=p["c"], rho=p["rho"], alpha=p["alpha"], Ns=d["Ns"], dt=d["dt"] or None,
                                    T=d["T"], length=g["length"], cfl=d["cfl"], port=sc["port"],
                                    record_every=io["cadence"])


def _check_type(value, types):
    if types is bool or types == (bool,):
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if types is float or types == (int, float):
        return isinstance(value, (int, float))
    return isinstance(value, types)


def validate_config(raw: dict, base: Path | None = None) -> RunConfig:
    """Schema check, defaults, geometry validation and CFL; raises ConfigError naming the key."""
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
    data: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
        out = {}
        for key, (types, default, check, text) in keys.items():
            value = given.get(key, copy.deepcopy(default))
            if not _check_type(value, types):
                raise ConfigError(f"{section}.{key} must be {text} (got {value!r})")
            if isinstance(types, tuple) and float in types and not isinstance(value, bool):
                value = float(value)
            if not check(value):
                raise ConfigError(f"{section}.{key} must be {text} (got {value!r})")
            out[key] = value
        data[section] = out
    for key in ("centerline_csv", "radius_csv"):
        if data["geometry"][key] and base is not None and not Path(data["geometry"][key]).is_absolute():
            data["geometry"][key] = str((base / data["geometry"][key]).resolve())
    if data["input"]["csv"] and base is not None and not Path(data["input"]["csv"]).is_absolute():
        data["input"]["csv"] = str((base / data["input"]["csv"]).resolve())
    if data["verify"]["s1"] <= data["verify"]["s0"]:
        raise ConfigError("verify.s1 must exceed verify.s0")
    cfg = RunConfig(data)
    geom = build_geometry(cfg)
    report = geo.validate(geom)
    if not report.accepted:
        raise ConfigError("geometry rejected: " + "; ".join(report.violations))
    try:
        solver = cfg.solver_config()
    except HorntubeError as exc:
        raise ConfigError(str(exc)) from exc
    if solver.courant() > webster.CFL_LIMIT:
        raise ConfigError(f"discretization.dt violates CFL: c*dt/ds = {solver.courant():.4g} > {webster.CFL_LIMIT}")
    data["discretization"]["dt"] = float(solver.time_step)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    cfg = validate_config(raw, path.parent)
    cfg.source = path
    return cfg


def write_resolved(cfg: RunConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.toml"
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.data, fh)
    return path


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _read_columns(path: str, n: int) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = np.array([[float(x) for x in r[:n]] for r in rows if _is_number(r[0])])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry") from exc
    if data.ndim != 2 or data.shape[1] != n:
        raise ConfigError(f"{path}: expected {n} numeric columns")
    return data


def _is_number(x: str) -> bool:
    try:
        float(x)
        return True
    except ValueError:
        return False


def build_geometry(cfg: RunConfig) -> geo.TubeGeometry:
    g = cfg["geometry"]
    fam = g["family"]
    radius = geo.PolynomialRadius(tuple(g["radius_coeffs"])) if g["radius_coeffs"] else None
    try:
        if fam == "cylinder":
            return geo.TubeGeometry(geo.LineCurve(), radius or geo.PolynomialRadius((g["radius"],)))
        if fam == "cone":
            return geo.TubeGeometry(geo.LineCurve(), radius or geo.PolynomialRadius((g["radius"], g["slope"])))
        if fam == "arc":
            return geo.TubeGeometry(geo.PlanarCurve.arc(g["curvature"]), radius or geo.PolynomialRadius((g["radius"],)))
        if fam == "planar":
            coeffs = tuple(g["curvature_coeffs"]) or (g["curvature"],)
            return geo.TubeGeometry(geo.PlanarCurve(coeffs), radius or geo.PolynomialRadius((g["radius"],)))
        if not g["centerline_csv"]:
            raise ConfigError("geometry.centerline_csv is required for the spline family")
        curve = geo.SplineCurve(_read_columns(g["centerline_csv"], 3))
        if g["radius_csv"]:
            table = _read_columns(g["radius_csv"], 2)
            radius = geo.SplineRadius(table[:, 0], table[:, 1])
        return geo.TubeGeometry(curve, radius or geo.PolynomialRadius((g["radius"],)))
    except ConfigError:
        raise
    except HorntubeError as exc:
        raise ConfigError(f"geometry: {exc}") from exc


def build_input(cfg: RunConfig, solver: webster.SolverConfig):
    i = cfg["input"]
    kind, amp = i["kind"], i["amplitude"]
    if kind == "none":
        return None
    if kind == "impulse":
        def impulse(t):
            return amp if abs(t - i["t0"]) < 0.5 * solver.time_step else 0.0
        return impulse
    if kind == "gaussian":
        return webster.gaussian_pulse(i["t0"], i["width"], amp)
    if kind == "tone":
        return lambda t: amp * math.sin(2 * math.pi * i["frequency"] * t)
    if not i["csv"]:
        raise ConfigError("input.csv is required for kind = 'csv'")
    table = _read_columns(i["csv"], 2)
    return lambda t: amp * float(np.interp(t, table[:, 0], table[:, 1], left=0.0, right=0.0))


def build_field(cfg: RunConfig, geom: geo.TubeGeometry, for_solver: bool = False) -> mf.ManufacturedSolution:
    solver = cfg.solver_config()
    c, alpha = solver.c_eff, solver.alpha_eff
    name = cfg["scenario"]["field"]
    fam = cfg["geometry"]["family"]
    straight = geom.centerline.kind == "line"
    coeffs = getattr(geom.radius, "coeffs", None)
    is_cone = straight and coeffs is not None and len(coeffs) == 2 and coeffs[1] > 0
    is_cyl = straight and coeffs is not None and len(coeffs) == 1
    if name == "auto":
        if is_cyl and alpha == 0:
            name = "dirichlet-mode" if for_solver else "plane-wave"
        elif is_cone and alpha == 0:
            name = "spherical-pulse" if for_solver else "spherical-wave"
        else:
            name = "generic"
    try:
        if name == "plane-wave":
            return mf.plane_wave(geom, c)
        if name == "dirichlet-mode":
            return mf.dirichlet_mode(geom, c, 1)
        if name == "reflected-pulse":
            return mf.reflected_pulse(geom, c)
        if name == "spherical-wave":
            return mf.spherical_wave(geom, c)
        if name == "spherical-pulse":
            return mf.spherical_pulse(geom, c)
        return mf.generic_smooth(geom, c, alpha, dirichlet=True)
    except HorntubeError as exc:
        raise ConfigError(f"scenario.field {name!r} does not fit geometry family {fam!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _num(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if not isinstance(v, str) else v for v in row])


def plot_svg(path: Path, x, ys: dict, xlabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "horntube"
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in ys.items():
        ax.plot(x, y, label=label, lw=1)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


@dataclass
class Outcome:
    passed: bool
    lines: list


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _simulate(cfg: RunConfig, geom, out: Path) -> Outcome:
    solver = cfg.solver_config()
    asm = webster.assemble(geom, solver)
    res = webster.run(geom, solver, u=build_input(cfg, solver), asm=asm)
    ts = res.signal_times
    write_csv(out / "series.csv", ["t", "u", "y", "E"],
              zip(ts, res.u, res.y, res.discrete_energy))
    rows = []
    for k, t in enumerate(res.times):
        for s, p, pt in zip(res.s, res.psi[k], res.psi_t[k]):
            rows.append((t, s, p, pt))
    write_csv(out / "snapshots.csv", ["t", "s", "psi", "psi_t"], rows)
    lines = [f"steps={solver.n_steps} dt={solver.time_step:.6g} courant={solver.courant():.3f}",
             f"energy: initial={res.energy[0]:.6g} final={res.energy[-1]:.6g}"]
    if solver.port == "scattering" and cfg["input"]["kind"] != "none":
        peaks = webster.resonance_frequencies(res, asm, n_peaks=3)
        if peaks.size:
            lines.append("resonances [Hz]: " + ", ".join(f"{p:.2f}" for p in peaks))
            write_csv(out / "resonances.csv", ["f"], [(p,) for p in peaks])
        if geom.centerline.kind == "line" and len(getattr(geom.radius, "coeffs", ())) == 1:
            lines.append(f"quarter-wave reference c/4L = {solver.c / (4 * solver.length):.2f} Hz")
    if cfg["io"]["plot"]:
        plot_svg(out / "series.svg", ts, {"u": res.u, "y": res.y}, "t [s]", "port signals")
        plot_svg(out / "energy.svg", ts, {"E": res.discrete_energy}, "t [s]", "discrete energy")
    return Outcome(True, lines)


def _tolerance(cfg: RunConfig, default: float) -> float:
    tol = cfg["verify"]["tolerance"]
    return tol if tol > 0 else default


def _verify_weak(cfg: RunConfig, geom, out: Path) -> Outcome:
    phi = build_field(cfg, geom)
    levels = cfg["verify"]["levels"] or [33, 65, 129, 257]
    tol = _tolerance(cfg, 1e-6 if phi.exact else 1e-3)
    rep = verify.weak_residual(phi, cfg["discretization"]["T"], levels=levels, nr=cfg["discretization"]["Nr"],
                               ntheta=cfg["discretization"]["Ntheta"], tolerance=tol,
                               min_order=cfg["verify"]["min_order"])
    write_csv(out / "weak_residual.csv", ["h", "residual"], zip(rep.h, rep.residuals))
    return Outcome(rep.passed, [rep.summary()])


def _verify_boundary(cfg: RunConfig, geom, out: Path) -> Outcome:
    phi = build_field(cfg, geom)
    rep = verify.boundary_equivalence(phi, cfg["verify"]["times"], nr=max(cfg["discretization"]["Nr"], 8),
                                      ntheta=max(cfg["discretization"]["Ntheta"], 16))
    write_csv(out / "boundary.csv", ["t", "lhs_plus", "rhs_plus", "lhs_minus", "rhs_minus", "K", "K_gap", "xi_correction"],
              zip(rep.times, rep.lhs_plus, rep.rhs_plus, rep.lhs_minus, rep.rhs_minus, rep.K, rep.K_gap, rep.xi_correction))
    tol = _tolerance(cfg, 1e-8)
    ok = rep.defect < tol and rep.k_consistency < 1e-10
    lines = [f"boundary defect={rep.defect:.3e} (tol {tol:.1e}) K consistency={rep.k_consistency:.3e} "
             f"strict={rep.strict} max|K|={np.max(np.abs(rep.K)):.3e}"]
    return Outcome(ok, lines)


def _verify_balance(cfg: RunConfig, geom, out: Path) -> Outcome:
    phi = build_field(cfg, geom)
    v = cfg["verify"]
    res = verify.integrated_balance(phi, v["s0"], v["s1"], v["t"], nr=cfg["discretization"]["Nr"],
                                    ntheta=cfg["discretization"]["Ntheta"])
    write_csv(out / "balance.csv", ["L", "rhs", "defect"], [(res.L, res.rhs, res.defect)])
    tol = _tolerance(cfg, 1e-8)
    return Outcome(abs(res.defect) < tol, [f"L={res.L:.6e} rhs={res.rhs:.6e} defect={res.defect:.3e} (tol {tol:.1e})"])


def _track(cfg: RunConfig, geom, out: Path) -> Outcome:
    phi = build_field(cfg, geom, for_solver=True)
    solver = cfg.solver_config()
    nr, nth = cfg["discretization"]["Nr"], cfg["discretization"]["Ntheta"]
    res = verify.tracking_run(phi, solver, with_loads=cfg["scenario"]["loads"], nr=nr, ntheta=nth)
    err = verify.tracking_error(res, phi, nr, nth)
    rows = [(t, s, e) for k, t in enumerate(err.times) for s, e in zip(res.s, err.error[k])]
    write_csv(out / "tracking.csv", ["t", "s", "error"], rows)
    tol = cfg["verify"]["tolerance"]
    ok = err.linf < tol if tol > 0 else True
    return Outcome(ok, [f"tracking ({phi.name}, loads={cfg['scenario']['loads']}): "
                        f"Linf={err.linf:.3e} L2={err.l2:.3e}"])


def _converge(cfg: RunConfig, geom, out: Path) -> Outcome:
    phi = build_field(cfg, geom, for_solver=True)
    base = cfg.solver_config()
    nr, nth = cfg["discretization"]["Nr"], cfg["discretization"]["Ntheta"]
    levels = cfg["verify"]["levels"] or [41, 81, 161, 321]
    with_loads = cfg["scenario"]["loads"]

    def scenario(ns):
        c = webster.with_dt(base, Ns=ns, dt=None)
        return verify.tracking_error(verify.tracking_run(phi, c, with_loads, nr, nth), phi, nr, nth).linf

    rep = verify.convergence_study(scenario, levels, name=f"tracking order ({phi.name})",
                                   min_order=cfg["verify"]["min_order"],
                                   tolerance=cfg["verify"]["tolerance"] or None)
    write_csv(out / "convergence.csv", ["Ns", "h", "error"], [(n, h, e) for n, h, e in zip(levels, rep.h, rep.residuals)])
    table = ["  Ns      h          error"] + [f"  {n:<6d}  {h:.3e}  {e:.3e}" for n, h, e in zip(levels, rep.h, rep.residuals)]
    return Outcome(rep.passed, [rep.summary()] + table)


HANDLERS = {
    "simulate": _simulate,
    "verify-weak": _verify_weak,
    "verify-boundary": _verify_boundary,
    "verify-balance": _verify_balance,
    "track": _track,
    "converge": _converge,
}


def dispatch(cfg: RunConfig, quiet: bool = False) -> int:
    out = Path(cfg["io"]["out_dir"])
    write_resolved(cfg, out)
    geom = build_geometry(cfg)
    name = cfg["scenario"]["name"]
    try:
        outcome = HANDLERS[name](cfg, geom, out)
    except DivergenceError as exc:
        print(f"horntube: {name}: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"horntube: config error: {exc}", file=sys.stderr)
        return 2
    with open(out / "summary.txt", "w") as fh:
        fh.write("\n".join([f"scenario: {name}"] + outcome.lines + [f"status: {'pass' if outcome.passed else 'FAIL'}"]) + "\n")
    if not quiet:
        print(f"scenario: {name}")
        for line in outcome.lines:
            print(line)
        print(f"status: {'pass' if outcome.passed else 'FAIL'}")
    return 0 if outcome.passed else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="horntube", description="Webster horn model and averaging verification")
    ap.add_argument("config", help="TOML configuration file")
    ap.add_argument("--scenario", choices=SCENARIOS, help="override scenario.name")
    ap.add_argument("--out", help="override io.out_dir")
    ap.add_argument("--quiet", action="store_true", help="suppress the summary")
    args = ap.parse_args(argv)
    try:
        path = Path(args.config)
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
        if args.scenario:
            raw.setdefault("scenario", {})["name"] = args.scenario
        if args.out:
            raw.setdefault("io", {})["out_dir"] = args.out
        cfg = validate_config(raw, path.parent)
    except FileNotFoundError:
        print(f"horntube: config error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except tomli.TOMLDecodeError as exc:
        print(f"horntube: config error: malformed TOML: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"horntube: config error: {exc}", file=sys.stderr)
        return 2
    return dispatch(cfg, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
