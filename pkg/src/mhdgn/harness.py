"""Run configuration, scenarios, drivers and output for the command line.

Configuration files are INI style.  Every section and key is listed in
``SCHEMA``; anything else is a :class:`ConfigError` naming the offending
``section.key``.  Outputs go to ``$MHDGN_OUTPUT/<run.name>/`` (default
``./mhdgn_output``): snapshots, ``diagnostics.csv`` and ``summary.json``.
"""

from __future__ import annotations

import configparser
import json
import os
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .closure import rhs_R_1d, rhs_R_2d, rhs_Rb_2d, rhs_Rm_2d
from .core import (
    Bathymetry, Grid1D, Grid2D, MHDGNError, ModelParams, SurfaceState1D, SurfaceState2D, constraint_norm,
    ddx, depth, perp_grad,
)
from .gn import advance, gn_energy, project_solenoidal
from .io import write_snapshot
from .operators import SigmaGrid
from .swmhd import ssp_rk2

OUTPUT_ENV = "MHDGN_OUTPUT"


class ConfigError(MHDGNError):
    pass


class NonMonotoneErrors(UserWarning):
    pass


# ---------------------------------------------------------------------------
# configuration


def _float(v):
    return float(v)


def _int(v):
    return int(v)


def _floats(v):
    return [float(s) for s in v.replace(",", " ").split()]


def _ints(v):
    return [int(s) for s in v.replace(",", " ").split()]


def _choice(*opts):
    def f(v):
        if v not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return v
    return f


MODELS = ("swmhd1d", "swmhd2d", "gn1d", "gn2d", "shear-oracle", "residual-sweep")

SCHEMA = {
    "run": {
        "model": (_choice(*MODELS), None),
        "name": (str, "run"),
        "t_end": (_float, 1.0),
        "cfl": (_float, 0.45),
        "dt": (_float, None),
        "output_every": (_float, None),
        "format": (_choice("csv", "mgn1", "both", "none"), "mgn1"),
        "seed": (_int, 0),
    },
    "params": {"mu": (_float, 0.0), "eps": (_float, 0.1), "beta": (_float, 0.0), "h_min": (_float, 1e-6)},
    "grid": {"nx": (_int, 64), "ny": (_int, 64), "lx": (_float, 2 * np.pi), "ly": (_float, 2 * np.pi),
             "nsigma": (_int, 32)},
    "bathymetry": {"kind": (_choice("flat", "gaussian"), "flat"), "amplitude": (_float, 1.0),
                   "width": (_float, 0.5)},
    "initial": {"kind": (_choice("rest", "hump", "random"), "rest"), "amplitude": (_float, 0.1),
                "width": (_float, 0.5), "velocity": (_float, 0.0), "magnetic": (_float, 0.0),
                "shear": (_float, 0.0), "modes": (_int, 3)},
    "scheme": {"limiter": (_choice("none", "minmod", "mc", "tvb"), "tvb"),
               "flux": (_choice("rusanov", "central"), "rusanov"),
               "advection": (_choice("centered", "upwind"), "centered")},
    "converge": {"scenario": (_choice("gn1d-manufactured", "advection", "shear-oracle"), "gn1d-manufactured"),
                 "resolutions": (_ints, [32, 64, 128, 256]), "t_end": (_float, 1.0)},
    "musweep": {"scenario": (_choice("generic", "irrotational", "zero"), "generic"),
                "mu_list": (_floats, [1e-2, 3e-3, 1e-3, 3e-4]), "threshold": (_float, 1.9),
                "floor": (_float, 1e-12)},
}


@dataclass
class Config:
    values: dict
    source: str = "<dict>"

    def __getitem__(self, key):
        return self.values[key]

    def get(self, section, key):
        return self.values[section][key]

    def params(self) -> ModelParams:
        p = self.values["params"]
        try:
            return ModelParams(p["mu"], p["eps"], p["beta"], p["h_min"])
        except ValueError as e:
            raise ConfigError(f"params: {e}") from e


def parse_config(text: str, source: str = "<string>") -> Config:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            conv = SCHEMA[sec][key][0]
            try:
                values[sec][key] = conv(raw.strip())
            except ValueError as e:
                raise ConfigError(f"invalid value for {sec}.{key}: {raw!r} ({e})") from e
    if values["run"]["model"] is None:
        raise ConfigError("missing required key run.model")
    for sec, key in (("run", "t_end"), ("run", "cfl"), ("grid", "lx"), ("grid", "ly")):
        if values[sec][key] <= 0:
            raise ConfigError(f"invalid value for {sec}.{key}: must be positive")
    for key in ("nx", "ny", "nsigma"):
        if values["grid"][key] < 1:
            raise ConfigError(f"invalid value for grid.{key}: must be >= 1")
    return Config(values, source)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, str(path))


def output_dir(name: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ENV, "mhdgn_output"))
    out = root / name
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# scenarios


def smooth_random_field(rng: np.random.Generator, grid, modes: int = 3, amplitude: float = 1.0) -> np.ndarray:
    """Sum of low Fourier modes with random coefficients (max-norm ``amplitude``)."""
    xs = grid.coords()
    f = np.zeros(grid.shape)
    for kx in range(modes + 1):
        for ky in range(modes + 1 if grid.ndim == 2 and grid.shape[-1] > 1 else 1):
            if kx == ky == 0:
                continue
            a, ph = rng.normal(), rng.uniform(0, 2 * np.pi)
            arg = kx * xs[0] * 2 * np.pi / (grid.length if grid.ndim == 1 else grid.lx)
            if grid.ndim == 2:
                arg = arg + ky * xs[1] * 2 * np.pi / grid.ly
            f += a * np.cos(arg + ph)
    m = np.max(np.abs(f))
    return amplitude * f / m if m > 0 else f


def make_grid(cfg: Config, dim: int):
    g = cfg["grid"]
    return Grid1D(g["nx"], g["lx"]) if dim == 1 else Grid2D(g["nx"], g["ny"], g["lx"], g["ly"])


def make_bathymetry(cfg: Config, grid) -> Bathymetry:
    bt = cfg["bathymetry"]
    if bt["kind"] == "flat":
        return Bathymetry.flat(grid)
    return Bathymetry.gaussian(grid, bt["amplitude"], bt["width"])


def make_initial(cfg: Config, grid, b: Bathymetry, p: ModelParams):
    ini = cfg["initial"]
    rng = np.random.Generator(np.random.PCG64(cfg.get("run", "seed")))
    xs = grid.coords()
    center = [0.5 * L for L in ((grid.length,) if grid.ndim == 1 else (grid.lx, grid.ly))]
    if ini["kind"] == "rest":
        xi = np.zeros(grid.shape)
    elif ini["kind"] == "hump":
        r2 = sum((x - c) ** 2 for x, c in zip(xs, center)) if grid.ndim == 1 or grid.ny > 1 \
            else (xs[0] - center[0]) ** 2
        xi = ini["amplitude"] * np.exp(-r2 / (2 * ini["width"] ** 2))
    else:
        xi = smooth_random_field(rng, grid, ini["modes"], ini["amplitude"])
    if grid.ndim == 1:
        u = ini["velocity"] * np.cos(xs[0])
        s = SurfaceState1D(xi, u, np.full(grid.shape, ini["shear"]), np.full(grid.shape, 0.5 * ini["shear"]))
        depth(s.xi, b, p)
        return s
    s = SurfaceState2D.rest(grid)
    s.xi = xi
    s.u_bar = ini["velocity"] * np.stack([np.cos(xs[1]), np.sin(xs[0])])
    if ini["magnetic"]:
        h = depth(xi, b, p)
        psi = smooth_random_field(rng, grid, ini["modes"], 1.0)
        m = perp_grad(psi, grid)
        s.B_bar = ini["magnetic"] * m / (np.max(np.abs(m)) * h)
    if ini["shear"]:
        s.R[0, 0] = s.R[1, 1] = ini["shear"]
        s.Rb[0, 0] = s.Rb[1, 1] = 0.5 * ini["shear"]
    return project_solenoidal(s, b, p, grid)


# ---------------------------------------------------------------------------
# drivers


def fit_slope(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def convergence_driver(error_fn: Callable[[int], dict], resolutions, lengths=2 * np.pi) -> dict:
    """Run ``error_fn(n)`` at each resolution and fit the order of every field.

    Resolutions must be at least three distinct dyadic steps.  Non-monotone
    error sequences trigger a :class:`NonMonotoneErrors` warning but are
    still reported.
    """
    res = list(resolutions)
    if len(res) < 3:
        raise ValueError("convergence study needs at least 3 resolutions")
    if len(set(res)) != len(res) or any(b != 2 * a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be distinct dyadic refinements, got {res}")
    errors = [error_fn(n) for n in res]
    dx = [lengths / n for n in res]
    orders = {}
    for key in errors[0]:
        e = [err[key] for err in errors]
        if any(b >= a for a, b in zip(e, e[1:])):
            warnings.warn(f"errors for {key!r} are not monotonically decreasing: {e}", NonMonotoneErrors)
        orders[key] = fit_slope(dx, e) if all(v > 0 for v in e) else None
    return {"resolutions": res, "errors": {k: [err[k] for err in errors] for k in errors[0]}, "orders": orders}


def mu_sweep_driver(residual_fn: Callable[[float], dict], mu_list, threshold: float = 1.9,
                    floor: float = 1e-12) -> dict:
    """Fit residual-vs-mu slopes.

    Status per residual: ``pass`` (slope >= threshold), ``fail``, ``floor``
    (every value at or below ``floor``: the residual vanishes up to
    round-off/discretization and has no mu dependence to fit) or ``N/A``
    (all values exactly zero).
    """
    mus = list(mu_list)
    if len(mus) < 4 or np.log10(max(mus) / min(mus)) < 1.5 - 1e-12:
        raise ValueError("mu sweep needs >= 4 values spanning >= 1.5 decades")
    rows = [residual_fn(mu) for mu in mus]
    out = {"mu": mus, "residuals": {}, "slopes": {}, "status": {}}
    for key in rows[0]:
        v = [r[key] for r in rows]
        out["residuals"][key] = v
        if all(x == 0 for x in v):
            out["slopes"][key], out["status"][key] = None, "N/A"
            continue
        slope = fit_slope(mus, np.maximum(v, 1e-300))
        out["slopes"][key] = slope
        if slope >= threshold:
            out["status"][key] = "pass"
        elif max(v) <= floor:
            out["status"][key] = "floor"
        else:
            out["status"][key] = "fail"
    return out


# -- built-in studies -----------------------------------------------------------


def gn1d_manufactured_errors(n: int, t_end: float = 1.0, limiter: str = "tvb", cfl: float = 0.4) -> dict:
    from .manufactured import gn1d_manufactured
    m = gn1d_manufactured()
    g = Grid1D(n)
    b = m.bathymetry(g)
    tr = advance(m.state(g), b, m.params, g, t_end, cfl=cfl, forcing=m.forcing(g), limiter=limiter)
    ex = m.state(g, tr.final.t)
    return {
        "xi": float(np.sqrt(np.mean((tr.final.xi - ex.xi) ** 2))),
        "u": float(np.sqrt(np.mean((tr.final.u_bar - ex.u_bar) ** 2))),
    }


def advection_errors(n: int, t_end: float = 1.0) -> dict:
    """Closure scalar advected by a uniform flow (exact translation)."""
    g = Grid1D(n)
    p = ModelParams(0.0, 1.0, 0.0)
    u = np.full(g.shape, 0.7)
    R = 1.0 + 0.5 * np.sin(g.x)
    dt = 0.4 * g.dx
    steps = int(np.ceil(t_end / dt))
    dt = t_end / steps
    for _ in range(steps):
        R = ssp_rk2(R, 0.0, dt, lambda v, t: rhs_R_1d(v, u, p, g))
    exact = 1.0 + 0.5 * np.sin(g.x - 0.7 * t_end)
    return {"R": float(np.sqrt(np.mean((R - exact) ** 2)))}


def shear_oracle_errors(n: int, t_end: float = 1.0, nsigma: int = 16) -> dict:
    """L2 mismatch between quadrature of transported shears and direct tensor transport."""
    from .vertical import build_shear, evolve_shear, shear_tensors
    g = Grid2D(n, n)
    X, Y = g.coords()
    sg = SigmaGrid(nsigma)
    b = Bathymetry.gaussian(g, 0.5, 1.0)
    p = ModelParams(0.01, 0.5, 0.2)
    xi = 0.1 * np.cos(X)

    def u(t):
        return np.stack([np.sin(X) * np.cos(Y) + 0.3 * np.sin(Y + t),
                         -0.5 * np.cos(X) * np.sin(Y) + 0.2 * np.cos(X)])

    z = sg.sigma[:, None, None]
    om = np.stack([np.cos(X)[None] * (1 + z) ** 2, np.sin(Y)[None] * z + 0 * X])
    jh = np.stack([np.sin(X + Y)[None] * (z - 0.3) ** 2, np.cos(X)[None] * z * (1 - z)])
    prof = build_shear(om, jh, xi, b, p, sg, g)
    W = np.stack(shear_tensors(prof, b, p, sg, g))

    def tend(V, t):
        uu = u(t)
        return np.stack([rhs_R_2d(V[0], uu, p, g), rhs_Rb_2d(V[1], uu, p, g), rhs_Rm_2d(V[2], uu, p, g)])

    steps = int(np.ceil(t_end / (0.2 * g.dx)))
    dt = t_end / steps
    t = 0.0
    for _ in range(steps):
        W = ssp_rk2(W, t, dt, tend)
        prof = evolve_shear(prof, u, b, p, sg, g, dt)
        t += dt
    Wq = np.stack(shear_tensors(prof, b, p, sg, g))
    return {name: float(np.sqrt(np.mean((Wq[k] - W[k]) ** 2))) for k, name in enumerate(("R", "Rb", "Rm"))}


def residual_case(mu: float, scenario: str = "generic", nx: int = 512, ny: int = 4, nsigma: int = 64,
                  eps: float = 0.1) -> dict:
    """Residual norms of the reconstructed 3D fields for prescribed smooth data on a flat column."""
    from .vertical import build_shear, reconstruct, residual_oracle
    g = Grid2D(nx, ny)
    X, Y = g.coords()
    sg = SigmaGrid(nsigma)
    b = Bathymetry.flat(g)
    p = ModelParams(mu, eps, 0.0)
    xi = np.zeros(g.shape)
    z = (-1.0 + sg.sigma)[:, None, None] + 0 * X
    Xc, Yc = X[None] + 0 * z, Y[None] + 0 * z
    if scenario == "zero":
        om = jh = np.zeros((2,) + z.shape)
        u = np.zeros((2,) + g.shape)
    else:
        u = np.stack([np.sin(X), 0.5 * np.cos(Y)])
        if scenario == "irrotational":
            om = jh = np.zeros((2,) + z.shape)
        else:
            om = np.stack([np.cos(Xc) * (1 + z) ** 2, np.sin(Yc) * z])
            jh = np.stack([np.sin(Xc + Yc) * (z + 0.3) ** 2, np.cos(Xc) * z * (1 + z)])
    prof = build_shear(om, jh, xi, b, p, sg, g)
    return residual_oracle(reconstruct(u, prof, b, p, sg, g), prof, p)


def pressure_crosscheck(mu: float, flow: str = "sin", nx: int = 4096, nsigma: int = 256, eps: float = 0.1) -> dict:
    """Depth-integrated non-hydrostatic force: column quadrature vs closed-form operators.

    The mismatch is normalized by the size of the two operator contributions
    (dispersive and nonlinear) rather than by their sum, which can cancel.
    """
    from .operators import op_D, op_F
    from .vertical import build_shear, pressure_force_integral, pressure_force_operator, reconstruct
    g = Grid2D(nx, 1)
    X, _ = g.coords()
    sg = SigmaGrid(nsigma)
    b = Bathymetry.flat(g)
    p = ModelParams(mu, eps, 0.0)
    xi = np.zeros(g.shape)
    u1 = np.sin(X) if flow == "sin" else np.sin(X) + 0.5 * np.cos(2 * X)
    u = np.stack([u1, 0 * X])
    zero = np.zeros((2, nsigma) + g.shape)
    rec = reconstruct(u, build_shear(zero, zero, xi, b, p, sg, g), b, p, sg, g)
    dudt = np.zeros_like(u)
    integral = pressure_force_integral(rec, dudt, p)
    operator = pressure_force_operator(u, dudt, xi, b, p, g)
    h = depth(xi, b, p)
    ugu = np.stack([u[0] * ddx(u[0], g, 0), 0 * X])
    scale = (np.linalg.norm(mu * h * op_F(eps * ugu, h, b, g, p))
             + np.linalg.norm(mu * eps * h * op_D(u, h, b, g, p)))
    diff = np.linalg.norm(integral - operator)
    return {"mismatch": float(diff / scale), "relative": float(diff / max(np.linalg.norm(operator), 1e-300))}


# ---------------------------------------------------------------------------
# run


def _diag_row(state, b, p, grid):
    h = depth(state.xi, b, p, check=False)
    row = {"t": state.t, "mass": float(np.sum(state.xi) * grid.cell_volume),
           "energy": gn_energy(state, b, p, grid), "min_h": float(np.min(h)),
           "max_u": float(np.max(np.abs(state.u_bar)))}
    row["constraint"] = constraint_norm(state, b, p, grid) if isinstance(state, SurfaceState2D) else 0.0
    return row


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def run_simulation(cfg: Config) -> dict:
    model = cfg.get("run", "model")
    if model in ("shear-oracle", "residual-sweep"):
        return run_study(cfg)
    dim = 1 if model.endswith("1d") else 2
    p = cfg.params()
    if model.startswith("swmhd"):
        p = p.replace(mu=0.0)
    grid = make_grid(cfg, dim)
    b = make_bathymetry(cfg, grid)
    b.check(p)
    s0 = make_initial(cfg, grid, b, p)
    out = output_dir(cfg.get("run", "name"))
    fmt = cfg.get("run", "format")
    if dim == 2 and model == "swmhd2d":
        s0.R[:] = 0.0
        s0.Rb[:] = 0.0
        s0.Rm[:] = 0.0
    if dim == 1 and model == "swmhd1d":
        s0.R[:] = 0.0
        s0.Rb[:] = 0.0
    sc = cfg["scheme"]
    t0 = time.perf_counter()
    traj = advance(s0, b, p, grid, cfg.get("run", "t_end"), cfl=cfg.get("run", "cfl"), dt=cfg.get("run", "dt"),
                   snapshot_every=cfg.get("run", "output_every"), limiter=sc["limiter"], flux=sc["flux"],
                   advection=sc["advection"])
    wall = time.perf_counter() - t0
    rows = [_diag_row(s, b, p, grid) for s in traj.states]
    keys = list(rows[0])
    with open(out / "diagnostics.csv", "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(f"{r[k]:.17g}" for k in keys) + "\n")
    if fmt != "none":
        for i, s in enumerate(traj.states):
            write_snapshot(out / f"snap_{i:04d}", grid, s, fmt)
    m0 = rows[0]["mass"]
    summary = {
        "model": model, "steps": traj.steps, "t_final": traj.times[-1], "wall_time": wall,
        "mass_drift": abs(rows[-1]["mass"] - m0) / max(abs(m0), 1e-300) if m0 != 0 else abs(rows[-1]["mass"]),
        "constraint_norm_max": max(r["constraint"] for r in rows),
        "min_h": min(r["min_h"] for r in rows),
        "snapshots": len(traj.states),
    }
    if cfg.get("initial", "kind") == "rest":
        summary["rest_residual"] = max(max(float(np.max(np.abs(s.xi - s0.xi))), float(np.max(np.abs(s.u_bar))))
                                       for s in traj.states)
    _write_json(out / "summary.json", summary)
    return summary


def run_study(cfg: Config) -> dict:
    model = cfg.get("run", "model")
    out = output_dir(cfg.get("run", "name"))
    t0 = time.perf_counter()
    if model == "shear-oracle":
        g = cfg["grid"]
        summary = {"model": model, "mismatch": shear_oracle_errors(g["nx"], cfg.get("run", "t_end"), g["nsigma"])}
    else:
        summary = {"model": model, **musweep(cfg)}
    summary["wall_time"] = time.perf_counter() - t0
    _write_json(out / "summary.json", summary)
    return summary


def converge(cfg: Config) -> dict:
    c = cfg["converge"]
    t_end = c["t_end"]
    fns = {
        "gn1d-manufactured": lambda n: gn1d_manufactured_errors(n, t_end, cfg.get("scheme", "limiter")),
        "advection": lambda n: advection_errors(n, t_end),
        "shear-oracle": lambda n: shear_oracle_errors(n, t_end),
    }
    t0 = time.perf_counter()
    result = convergence_driver(fns[c["scenario"]], c["resolutions"])
    result["scenario"] = c["scenario"]
    result["wall_time"] = time.perf_counter() - t0
    _write_json(output_dir(cfg.get("run", "name")) / "summary.json", result)
    return result


def musweep(cfg: Config) -> dict:
    c, g = cfg["musweep"], cfg["grid"]
    result = mu_sweep_driver(
        lambda mu: residual_case(mu, c["scenario"], g["nx"], g["ny"], g["nsigma"], cfg.get("params", "eps")),
        c["mu_list"], c["threshold"], c["floor"])
    result["scenario"] = c["scenario"]
    return result
