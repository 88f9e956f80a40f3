"""Finite-volume solver for the nonlinear shallow MHD system.

The scheme evolves U = (xi, q = h u, m = h B) with h = 1 + eps*xi - beta*b.
Writing the pressure term as

    -h grad xi = -grad(xi + eps xi^2 / 2) + beta b grad xi

puts the first piece in the flux and keeps the second as a centered
non-conservative source built from the same interface values of xi.  The
lake at rest (xi = 0, q = m = 0) is then an exact discrete steady state
over any bottom, and over a flat bottom momentum is exactly conserved.
Interface fluxes are Rusanov (or central, for energy checks) with optional
limited MUSCL reconstruction; time stepping is SSP-RK2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import (
    Bathymetry, CFLViolation, DepthTooSmall, ModelParams, SurfaceState1D, SurfaceState2D, ddx, depth,
)

LIMITERS = ("none", "minmod", "mc", "tvb")
TVB_M = 1.0
FLUXES = ("rusanov", "central")


@dataclass
class ConservativeState:
    """Conservative variables; ``hu`` and ``hB`` have a leading component axis."""

    xi: np.ndarray
    hu: np.ndarray
    hB: np.ndarray
    t: float = 0.0

    @property
    def dim(self) -> int:
        return self.hu.shape[0]

    def h(self, b: Bathymetry, p: ModelParams, check: bool = True) -> np.ndarray:
        return depth(self.xi, b, p, check=check)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.xi[None], self.hu, self.hB])

    @classmethod
    def unpack(cls, U: np.ndarray, t: float = 0.0) -> "ConservativeState":
        d = (U.shape[0] - 1) // 2
        return cls(U[0].copy(), U[1:1 + d].copy(), U[1 + d:].copy(), t)

    @classmethod
    def from_surface(cls, s, b: Bathymetry, p: ModelParams) -> "ConservativeState":
        h = depth(s.xi, b, p)
        if isinstance(s, SurfaceState1D):
            return cls(s.xi.copy(), (h * s.u_bar)[None], np.zeros((1,) + h.shape), s.t)
        return cls(s.xi.copy(), h * s.u_bar, h * s.B_bar, s.t)

    def velocity(self, b, p) -> np.ndarray:
        return self.hu / self.h(b, p)

    def magnetic(self, b, p) -> np.ndarray:
        return self.hB / self.h(b, p)


def _split(U):
    d = (U.shape[0] - 1) // 2
    return U[0], U[1:1 + d], U[1 + d:]


def physical_flux(U, h, p: ModelParams, direction: int) -> np.ndarray:
    """Flux of the packed state ``U`` in ``direction`` given the depth ``h``."""
    xi, q, m = _split(U)
    k = direction
    F = np.empty_like(U)
    d = q.shape[0]
    F[0] = q[k]
    e_h = p.eps / h
    for i in range(d):
        F[1 + i] = e_h * (q[k] * q[i] - m[k] * m[i])
        F[1 + d + i] = e_h * (q[k] * m[i] - m[k] * q[i])
    F[1 + k] += xi + 0.5 * p.eps * xi**2
    return F


def local_wave_speed(U, h, p: ModelParams, direction: int) -> np.ndarray:
    """|eps u_k| + sqrt(h + eps^2 B_k^2), the largest characteristic speed per cell."""
    _, q, m = _split(U)
    k = direction
    return np.abs(p.eps * q[k] / h) + np.sqrt(h + (p.eps * m[k] / h) ** 2)


def characteristic_speeds(U, h, p: ModelParams, direction: int) -> np.ndarray:
    """All eigenvalues of the directional quasi-linear system (1D data: 3 values, 2D: 5)."""
    _, q, m = _split(U)
    k = direction
    u, B = q[k] / h, m[k] / h
    c = np.sqrt(h + (p.eps * B) ** 2)
    eu = p.eps * u
    zero = np.zeros_like(eu)  # the normal magnetic flux is frozen
    if q.shape[0] == 1:
        return np.stack([eu - c, zero, eu + c])
    return np.stack([eu - c, eu - p.eps * np.abs(B), zero, eu + p.eps * np.abs(B), eu + c])


def fd_flux_jacobian(U, bb, p: ModelParams, direction: int, step: float = 1e-7) -> np.ndarray:
    """Quasi-linear matrix A(U) of a single state (central finite differences of the flux).

    ``U`` is one packed state vector and ``bb = beta*b`` the local bottom; the
    non-conservative bottom source contributes -beta*b to d(flux_q)/d(xi).
    """
    U = np.asarray(U, dtype=float)
    n = U.size

    def flux(V):
        return physical_flux(V, 1.0 + p.eps * V[0] - bb, p, direction)

    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step * max(1.0, abs(U[j]))
        J[:, j] = (flux(U + e) - flux(U - e)) / (2 * e[j])
    J[1 + direction, 0] -= bb
    return J


def max_wave_speed(state: ConservativeState, b: Bathymetry, p: ModelParams, direction: int | None = None) -> float:
    """Upper bound on the characteristic speeds (over all directions when ``direction`` is None)."""
    U = state.pack()
    h = state.h(b, p)
    dirs = range(state.dim) if direction is None else [direction]
    return float(max(np.max(local_wave_speed(U, h, p, k)) for k in dirs))


def _minmod(*args):
    a = np.stack(args)
    same = np.all(a > 0, axis=0) | np.all(a < 0, axis=0)
    return np.where(same, np.sign(a[0]) * np.min(np.abs(a), axis=0), 0.0)


def _limited_slope(W, ax, limiter, dx):
    """Limited cell slope (in units of cell differences).

    ``minmod``: minmod(dl, dr).  ``mc``: monotonized-central slope
    minmod(c, 2 dl, 2 dr) with c the centered difference.  ``tvb``: ``mc``
    left unlimited where |c| <= M dx^2, so that smooth extrema are not
    clipped (total-variation-bounded modification).
    """
    dl = W - np.roll(W, 1, axis=ax)
    dr = np.roll(W, -1, axis=ax) - W
    if limiter == "minmod":
        return _minmod(dl, dr)
    c = 0.5 * (dl + dr)
    mc = _minmod(c, 2.0 * dl, 2.0 * dr)
    return mc if limiter == "mc" else np.where(np.abs(c) <= TVB_M * dx**2, c, mc)


def _face_states(W, ax, limiter, dx=1.0):
    """Left/right values at face i+1/2 for every i."""
    if limiter == "none":
        return W, np.roll(W, -1, axis=ax)
    s = 0.5 * _limited_slope(W, ax, limiter, dx)
    return W + s, np.roll(W - s, -1, axis=ax)


def fv_tendency(U, b: Bathymetry, p: ModelParams, grid, limiter="tvb", flux="rusanov") -> np.ndarray:
    """Semi-discrete right-hand side dU/dt of the shallow MHD system."""
    if limiter not in LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}")
    if flux not in FLUXES:
        raise ValueError(f"unknown flux {flux!r}")
    dU = np.zeros_like(U)
    bb = p.beta * b.b
    for k in range(grid.ndim):
        ax = k - grid.ndim
        if U.shape[ax] == 1:
            continue
        UL, UR = _face_states(U, ax, limiter, grid.spacing[k])
        bL, bR = _face_states(bb, ax, limiter, grid.spacing[k])
        hL = 1.0 + p.eps * UL[0] - bL
        hR = 1.0 + p.eps * UR[0] - bR
        if min(hL.min(), hR.min()) <= p.h_min:
            raise DepthTooSmall("reconstructed depth below h_min")
        Fh = 0.5 * (physical_flux(UL, hL, p, k) + physical_flux(UR, hR, p, k))
        if flux == "rusanov":
            a = np.maximum(local_wave_speed(UL, hL, p, k), local_wave_speed(UR, hR, p, k))
            Fh -= 0.5 * a * (UR - UL)
        dx = grid.spacing[k]
        dU -= (Fh - np.roll(Fh, 1, axis=ax)) / dx
        xi_face = 0.5 * (UL[0] + UR[0])
        dU[1 + k] += bb * (xi_face - np.roll(xi_face, 1, axis=ax)) / dx
    return dU


def induction_rhs_2d(state: ConservativeState, b: Bathymetry, p: ModelParams, grid) -> np.ndarray:
    """Centered tendency of hB: eps div(hB (x) u) - eps div(hu (x) B)."""
    h = state.h(b, p)
    q, m = state.hu, state.hB
    d = q.shape[0]
    out = np.zeros_like(m)
    for j in range(d):
        for i in range(grid.ndim):
            out[j] -= ddx(p.eps * (q[i] * m[j] - m[i] * q[j]) / h, grid, i)
    return out


def stable_dt(state: ConservativeState, b: Bathymetry, p: ModelParams, grid, cfl: float = 0.45) -> float:
    U = state.pack()
    h = state.h(b, p)
    rate = 0.0
    for k in range(grid.ndim):
        if U.shape[k - grid.ndim] > 1:
            rate = max(rate, float(np.max(local_wave_speed(U, h, p, k))) / grid.spacing[k])
    return cfl / rate


def check_cfl(dt, state, b, p, grid, cfl=0.45):
    limit = stable_dt(state, b, p, grid, cfl)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds CFL limit {limit:.3e} (cfl={cfl})")


def ssp_rk2(U, t, dt, tendency: Callable, post: Callable | None = None):
    """Two-stage strong-stability-preserving Runge-Kutta step."""
    post = post or (lambda V, s: V)
    U1 = post(U + dt * tendency(U, t), t + dt)
    return post(0.5 * U + 0.5 * (U1 + dt * tendency(U1, t + dt)), t + dt)


def step_swmhd(state: ConservativeState, b: Bathymetry, p: ModelParams, dt: float, grid,
               cfl: float = 0.45, limiter: str = "tvb", flux: str = "rusanov",
               forcing: Callable | None = None, projection: Callable | None = None) -> ConservativeState:
    """One SSP-RK2 step.

    ``forcing(t, U)`` returns an extra tendency for the packed state;
    ``projection(U, t)`` is applied after each stage (e.g. to clean the
    magnetic divergence in 2D).
    """
    check_cfl(dt, state, b, p, grid, cfl)

    def tend(U, t):
        dU = fv_tendency(U, b, p, grid, limiter, flux)
        if forcing is not None:
            dU += forcing(t, U)
        return dU

    U = ssp_rk2(state.pack(), state.t, dt, tend, projection)
    return ConservativeState.unpack(U, state.t + dt)


def run_swmhd(state: ConservativeState, b, p, grid, t_end: float, cfl: float = 0.45,
              dt: float | None = None, **kw) -> ConservativeState:
    """Advance to ``t_end`` with adaptive (or fixed) steps."""
    s = replace(state)
    while s.t < t_end - 1e-14:
        step = dt if dt is not None else stable_dt(s, b, p, grid, cfl)
        step = min(step, t_end - s.t)
        s = step_swmhd(s, b, p, step, grid, cfl=cfl, **kw)
    return s
