"""Magnetic Green-Naghdi time steppers (1D and 2D).

The hyperbolic part is the shallow MHD finite-volume tendency of
:mod:`mhdgn.swmhd`; the dispersive part enters as a correction to the
momentum tendency,

    d(hu)/dt = FV + h s,
    s = (1 + mu F)^{-1} [mu F (grad xi - eps B.grad B) - eps mu D(u)
                         - eps mu/h div R + eps mu/h div Rb + S_u],

which is obtained by subtracting the shallow-water acceleration from the
full one.  For mu = 0 (and no forcing) the correction is skipped, so the
GN and shallow MHD code paths coincide bit for bit.  In 2D the magnetic
flux additionally receives h * eps sqrt(mu) div(Rm^t - Rm) and is
projected onto div(hB) = 0 after every Runge-Kutta stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closure import rhs_R_1d, rhs_R_2d, rhs_Rb_1d, rhs_Rb_2d, rhs_Rm_2d
from .core import (
    Bathymetry, MHDGNError, ModelParams, SurfaceState1D, SurfaceState2D, ddx, depth, grad, tensor_div,
)
from .operators import apply_modified_momentum, op_D, op_F, solve_modified_momentum
from .swmhd import ConservativeState, check_cfl, fv_tendency, ssp_rk2, stable_dt


class InstabilityDetected(MHDGNError):
    pass


# ---------------------------------------------------------------------------
# solenoidal projection


def _centered_symbols(grid, shape):
    ks = []
    for k in range(grid.ndim):
        n = shape[k]
        w = 2 * np.pi * np.fft.fftfreq(n, d=grid.spacing[k])
        ks.append(np.sin(w * grid.spacing[k]) / grid.spacing[k])
    return np.meshgrid(*ks, indexing="ij")


def project_flux(m: np.ndarray, grid) -> np.ndarray:
    """Remove the gradient part of a periodic vector field: m - grad psi with div grad psi = div m.

    Both operators are the centered differences used everywhere else, so the
    result is divergence free to round-off under the discrete divergence.
    """
    if not np.any(m):
        return m.copy()
    sx, sy = _centered_symbols(grid, m.shape[1:])
    mh = np.fft.fft2(m, axes=(-2, -1))
    divh = 1j * (sx * mh[0] + sy * mh[1])
    lap = -(sx**2 + sy**2)
    # modes with vanishing symbol carry no discrete divergence
    safe = np.abs(lap) > 1e-12 * np.max(np.abs(lap))
    psi = np.where(safe, divh / np.where(safe, lap, 1.0), 0.0)
    corr = np.stack([1j * sx * psi, 1j * sy * psi])
    return m - np.real(np.fft.ifft2(corr, axes=(-2, -1)))


def project_solenoidal(state: SurfaceState2D, b: Bathymetry, p: ModelParams, grid) -> SurfaceState2D:
    """Return a copy of ``state`` whose h*B_bar is discretely divergence free."""
    h = depth(state.xi, b, p)
    m = project_flux(h * state.B_bar, grid)
    return SurfaceState2D(state.xi.copy(), state.u_bar.copy(), m / h, state.R.copy(),
                          state.Rb.copy(), state.Rm.copy(), state.t)


# ---------------------------------------------------------------------------
# packed systems


@dataclass
class GNSystem:
    """Packed right-hand side of the 1D or 2D magnetic GN equations.

    ``forcing(t)`` may return a dict of source terms for the surface
    variables (keys ``xi``, ``u``, ``B``, ``R``, ``Rb``, ``Rm``); the ``u``
    source is added inside the elliptic inversion, i.e. to the right-hand
    side of (1 + mu F)(du/dt + eps u.grad u) = ...
    """

    b: Bathymetry
    p: ModelParams
    grid: object
    limiter: str = "tvb"
    flux: str = "rusanov"
    advection: str = "centered"
    forcing: Callable | None = None
    project: bool = True
    tol: float = 1e-10

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    @property
    def nfv(self) -> int:
        return 1 + 2 * self.ndim

    # -- packing -----------------------------------------------------------
    def pack(self, s) -> np.ndarray:
        h = depth(s.xi, self.b, self.p)
        if self.ndim == 1:
            return np.stack([s.xi, h * s.u_bar, np.zeros_like(h), s.R, s.Rb])
        tens = [T.reshape((4,) + h.shape) for T in (s.R, s.Rb, s.Rm)]
        return np.concatenate([s.xi[None], h * s.u_bar, h * s.B_bar] + tens)

    def unpack(self, W, t=0.0):
        h = depth(W[0], self.b, self.p, check=False)
        if self.ndim == 1:
            return SurfaceState1D(W[0].copy(), W[1] / h, W[3].copy(), W[4].copy(), t)
        sh = (2, 2) + h.shape
        return SurfaceState2D(W[0].copy(), W[1:3] / h, W[3:5] / h, W[5:9].reshape(sh).copy(),
                              W[9:13].reshape(sh).copy(), W[13:17].reshape(sh).copy(), t)

    def conservative(self, W, t=0.0) -> ConservativeState:
        return ConservativeState.unpack(W[:self.nfv], t)

    # -- tendencies ---------------------------------------------------------
    def tendency(self, W, t):
        p, grid, b = self.p, self.grid, self.b
        h = depth(W[0], b, p)
        dW = np.zeros_like(W)
        dW[:self.nfv] = fv_tendency(W[:self.nfv], b, p, grid, self.limiter, self.flux)
        src = self.forcing(t) if self.forcing is not None else {}
        if self.ndim == 1:
            self._tendency_1d(W, h, dW, src)
        else:
            self._tendency_2d(W, h, dW, src)
        return dW

    def _tendency_1d(self, W, h, dW, src):
        p, grid, b = self.p, self.grid, self.b
        u, R, Rb = W[1] / h, W[3], W[4]
        if p.mu != 0.0 or "u" in src:
            rhs = np.zeros_like(h)
            if p.mu != 0.0:
                rhs += p.mu * op_F(ddx(W[0], grid), h, b, grid, p)
                rhs -= p.eps * p.mu * op_D(u, h, b, grid, p)
                rhs -= p.eps * p.mu * ddx(R - Rb, grid) / h
            rhs += src.get("u", 0.0)
            dW[1] += h * solve_modified_momentum(rhs, h, b, p, grid, self.tol)
        if "xi" in src:
            dW[0] += src["xi"]
            dW[1] += p.eps * u * src["xi"]
        dW[3] = rhs_R_1d(R, u, p, grid, self.advection) + src.get("R", 0.0)
        dW[4] = rhs_Rb_1d(Rb, u, p, grid, self.advection) + src.get("Rb", 0.0)

    def _tendency_2d(self, W, h, dW, src):
        p, grid, b = self.p, self.grid, self.b
        sh = (2, 2) + h.shape
        u, B = W[1:3] / h, W[3:5] / h
        R, Rb, Rm = (W[i:i + 4].reshape(sh) for i in (5, 9, 13))
        if p.mu != 0.0 or "u" in src:
            rhs = np.zeros_like(u)
            if p.mu != 0.0:
                BgB = np.stack([sum(B[k] * ddx(B[i], grid, k) for k in range(2)) for i in range(2)])
                rhs += p.mu * op_F(grad(W[0], grid) - p.eps * BgB, h, b, grid, p)
                rhs -= p.eps * p.mu * op_D(u, h, b, grid, p)
                rhs -= p.eps * p.mu * (tensor_div(R, grid) - tensor_div(Rb, grid)) / h
            rhs += src.get("u", 0.0)
            dW[1:3] += h * solve_modified_momentum(rhs, h, b, p, grid, self.tol)
        if p.mu != 0.0 and np.any(Rm):
            dW[3:5] += h * p.eps * np.sqrt(p.mu) * tensor_div(np.swapaxes(Rm, 0, 1) - Rm, grid)
        if "xi" in src:
            dW[0] += src["xi"]
            dW[1:3] += p.eps * u * src["xi"]
            dW[3:5] += p.eps * B * src["xi"]
        if "B" in src:
            dW[3:5] += h * src["B"]
        dW[5:9] = (rhs_R_2d(R, u, p, grid, self.advection) + src.get("R", 0.0)).reshape((4,) + h.shape)
        dW[9:13] = (rhs_Rb_2d(Rb, u, p, grid, self.advection) + src.get("Rb", 0.0)).reshape((4,) + h.shape)
        dW[13:17] = (rhs_Rm_2d(Rm, u, p, grid, self.advection) + src.get("Rm", 0.0)).reshape((4,) + h.shape)

    def post(self, W, t):
        if self.ndim == 2 and self.project:
            W = W.copy()
            W[3:5] = project_flux(W[3:5], self.grid)
        return W

    def stable_dt(self, W, cfl):
        return stable_dt(self.conservative(W), self.b, self.p, self.grid, cfl)

    def step(self, W, t, dt):
        return ssp_rk2(W, t, dt, self.tendency, self.post)


def _surface_tendency(sys: GNSystem, state):
    W = sys.pack(state)
    dW = sys.tendency(W, state.t)
    h = depth(W[0], sys.b, sys.p)
    ht = sys.p.eps * dW[0]
    if sys.ndim == 1:
        u = W[1] / h
        return SurfaceState1D(dW[0], (dW[1] - u * ht) / h, dW[3], dW[4], state.t)
    d = sys.unpack(dW)
    d.u_bar = (dW[1:3] - W[1:3] / h * ht) / h
    d.B_bar = (dW[3:5] - W[3:5] / h * ht) / h
    d.t = state.t
    return d


def rhs_gn_1d(state: SurfaceState1D, b: Bathymetry, p: ModelParams, grid, **kw) -> SurfaceState1D:
    """Time derivative of every surface field (returned as a SurfaceState1D)."""
    return _surface_tendency(GNSystem(b, p, grid, **kw), state)


def rhs_gn_2d(state: SurfaceState2D, b: Bathymetry, p: ModelParams, grid, **kw) -> SurfaceState2D:
    """Time derivative of every surface field (returned as a SurfaceState2D)."""
    return _surface_tendency(GNSystem(b, p, grid, **kw), state)


# ---------------------------------------------------------------------------
# driver


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    steps: int = 0

    @property
    def final(self):
        return self.states[-1]


def advance(state, b: Bathymetry, p: ModelParams, grid, t_end: float, cfl: float = 0.45,
            dt: float | None = None, snapshot_every: float | None = None,
            max_steps: int | None = None, callback: Callable | None = None, **kw) -> Trajectory:
    """Integrate the magnetic GN system from ``state.t`` to ``t_end`` with SSP-RK2.

    ``dt=None`` picks the step from the hyperbolic CFL bound.  Snapshots are
    stored at the start, every ``snapshot_every`` time units and at the end.
    Errors raised inside a step are re-raised with the step index attached.
    """
    sys = GNSystem(b, p, grid, **kw)
    W = sys.post(sys.pack(state), state.t)
    t = state.t
    traj = Trajectory([t], [sys.unpack(W, t)])
    next_snap = t + snapshot_every if snapshot_every else np.inf
    n = 0
    umax = float(np.max(np.abs(W[1:1 + grid.ndim])))
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        if max_steps is not None and n >= max_steps:
            break
        try:
            step = dt if dt is not None else sys.stable_dt(W, cfl)
            if dt is not None:
                check_cfl(step, sys.conservative(W), b, p, grid, cfl)
            step = min(step, t_end - t, next_snap - t) if next_snap > t else min(step, t_end - t)
            W = sys.step(W, t, step)
        except MHDGNError as e:
            raise type(e)(f"step {n}: {e}") from e
        t += step
        n += 1
        new_max = float(np.max(np.abs(W[1:1 + grid.ndim])))
        if not np.isfinite(new_max) or (umax > 1e-8 and new_max > 10.0 * umax):
            raise InstabilityDetected(f"step {n}: max|hu| jumped from {umax:.3e} to {new_max:.3e}")
        umax = new_max
        if callback is not None:
            callback(n, t, W)
        if t >= next_snap - 1e-12:
            traj.times.append(t)
            traj.states.append(sys.unpack(W, t))
            next_snap += snapshot_every
    if traj.times[-1] != t:
        traj.times.append(t)
        traj.states.append(sys.unpack(W, t))
    traj.steps = n
    return traj


def gn_energy(state, b: Bathymetry, p: ModelParams, grid) -> float:
    """Discrete energy 1/2 sum(xi^2 + u . h(1 + mu F) u + h|B|^2) * cell volume."""
    h = depth(state.xi, b, p)
    u = state.u_bar
    Au = h * apply_modified_momentum(u, h, b, p, grid)
    e = state.xi**2 + np.sum(u * Au, axis=0) if u.ndim > h.ndim else state.xi**2 + u * Au
    B = getattr(state, "B_bar", None)
    if B is not None:
        e = e + h * np.sum(B**2, axis=0)
    return float(0.5 * np.sum(e) * grid.cell_volume)
