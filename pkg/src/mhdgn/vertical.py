"""Vertical structure: shear profiles, field reconstruction, pressure, residuals.

Profiles live on terrain-following levels z = -1 + beta b + sigma h and have
shape ``(2, n_sigma, nx, ny)`` for horizontal vectors, ``(n_sigma, nx, ny)``
for scalars.  The reconstruction is

    U_h = u + sqrt(mu) U* + mu L*u + mu^{3/2} L*U*
    U_v = -mu div int_b^z u - mu^{3/2} div int_b^z U*
    B_h = sqrt(mu) B1 + mu^{3/2} (L*B1 + (1/h) perp-grad phi3),  B1 = B* + (1/h) perp-grad phi1
    B_v = -mu^{3/2} div int_b^z B1

with U* = (int_z^surface omega_h^perp)*, B* = (int_z^surface j_h^perp)*, and
the potentials fixed by depth-averaged vertical-current conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import (
    Bathymetry, CFLViolation, MHDGNError, ModelParams, ddx, depth, div, jacobian, perp, perp_grad,
)
from .operators import ColumnGeometry, SigmaGrid, op_D, op_F, op_L_star, solve_stream

__all__ = [
    "SigmaGrid", "ShearProfile", "ReconstructedFields", "JvNonzero", "build_shear", "evolve_shear",
    "shear_tensors", "reconstruct_velocity", "reconstruct_magnetic", "reconstruct",
    "nonhydrostatic_pressure", "pressure_force_integral", "pressure_force_operator", "residual_oracle",
]


class JvNonzero(MHDGNError):
    pass


@dataclass
class ShearProfile:
    """Shear data over the water columns.

    ``omega_h``/``j_h`` are the horizontal vorticity/current profiles,
    ``U_star``/``B_star`` their starred vertical integrals, ``j_v1`` the
    O(sqrt(mu)) vertical current (horizontal field), ``xi`` the surface
    elevation defining the columns.
    """

    omega_h: np.ndarray
    j_h: np.ndarray
    U_star: np.ndarray
    B_star: np.ndarray
    xi: np.ndarray
    j_v1: np.ndarray | None = None
    t: float = 0.0


@dataclass
class ReconstructedFields:
    U_h: np.ndarray
    U_v: np.ndarray
    B_h: np.ndarray
    B_v: np.ndarray
    phi1: np.ndarray
    phi3: np.ndarray
    geom: ColumnGeometry
    P_nh: np.ndarray | None = None


def _geometry(xi, b, p, sg, grid) -> ColumnGeometry:
    return ColumnGeometry.from_surface(xi, b, p, sg, grid)


def _starred_integral(f, geom):
    """(int_z^surface f^perp)* for a horizontal-vector profile ``f``."""
    return geom.star(geom.to_top(perp(f)))


def build_shear(omega_h, j_h, xi, b: Bathymetry, p: ModelParams, sg: SigmaGrid, grid,
                j_v1=None) -> ShearProfile:
    geom = _geometry(xi, b, p, sg, grid)
    omega_h = np.asarray(omega_h, dtype=float)
    j_h = np.asarray(j_h, dtype=float)
    return ShearProfile(omega_h, j_h, _starred_integral(omega_h, geom), _starred_integral(j_h, geom),
                        np.array(xi, dtype=float), j_v1)


def shear_tensors(profile: ShearProfile, b, p, sg, grid):
    """Depth integrals (R, Rb, Rm) = int (U*U*^t, B*B*^t, B*U*^t) dz."""
    geom = _geometry(profile.xi, b, p, sg, grid)
    U, B = profile.U_star, profile.B_star
    R = geom.integrate(np.einsum("i...,j...->ij...", U, U))
    Rb = geom.integrate(np.einsum("i...,j...->ij...", B, B))
    Rm = geom.integrate(np.einsum("i...,j...->ij...", B, U))
    return R, Rb, Rm


def evolve_shear(profile: ShearProfile, u_bar: Callable | np.ndarray, b: Bathymetry, p: ModelParams,
                 sg: SigmaGrid, grid, dt: float, cfl: float = 1.0) -> ShearProfile:
    """One SSP-RK2 step of the shear equations on fixed sigma levels.

    At fixed sigma, and with the columns following d xi/dt = -div(h u), the
    vertical transport terms cancel and the shears obey

        dU*/dt = -eps (u.grad U* + G U*),   dB*/dt = -eps (u.grad B* - G B*),

    with G[i, j] = d_j u_i.  ``u_bar`` is an array or a function of time.
    The star property is re-imposed after the step.
    """
    ufun = u_bar if callable(u_bar) else (lambda t: u_bar)
    umax = float(np.max(np.abs(ufun(profile.t))))
    if p.eps * umax * dt > cfl * min(grid.spacing[k] for k in range(grid.ndim) if grid.shape[k] > 1):
        raise CFLViolation(f"shear transport step dt={dt:.3e} violates the advective CFL bound")

    def tend(xi, U, B, t):
        u = ufun(t)
        h = 1.0 + p.eps * xi - p.beta * b.b
        G = jacobian(u, grid)
        def adv(F):
            return sum(u[k][None] * ddx(F, grid, k) for k in range(grid.ndim))
        GU = np.einsum("ij...,j...->i...", G[:, :, None], U)
        GB = np.einsum("ij...,j...->i...", G[:, :, None], B)
        dU = -p.eps * (np.stack([adv(U[i]) for i in range(2)]) + GU)
        dB = -p.eps * (np.stack([adv(B[i]) for i in range(2)]) - GB)
        return -div(h * u, grid), dU, dB

    t = profile.t
    s0 = (profile.xi, profile.U_star, profile.B_star)
    k1 = tend(*s0, t)
    s1 = tuple(a + dt * k for a, k in zip(s0, k1))
    k2 = tend(*s1, t + dt)
    xi, U, B = (0.5 * a + 0.5 * (c + dt * k) for a, c, k in zip(s0, s1, k2))
    geom = _geometry(xi, b, p, sg, grid)
    return replace(profile, U_star=geom.star(U), B_star=geom.star(B), xi=xi, t=t + dt)


# ---------------------------------------------------------------------------
# reconstruction


def reconstruct_velocity(u_bar, profile: ShearProfile | None, xi, b, p: ModelParams, sg: SigmaGrid, grid):
    """Return (U_h, U_v) on the sigma levels."""
    geom = _geometry(xi, b, p, sg, grid)
    ubar = geom.column(u_bar)
    Us = profile.U_star if profile is not None else np.zeros_like(ubar)
    mu = p.mu
    if mu == 0.0:
        return ubar, np.zeros(ubar.shape[1:])
    sm = np.sqrt(mu)
    U_h = ubar + sm * Us + mu * op_L_star(ubar, geom) + mu * sm * op_L_star(Us, geom)
    U_v = -mu * geom.div_z(geom.from_bottom(ubar)) - mu * sm * geom.div_z(geom.from_bottom(Us))
    return U_h, U_v


def _potential(rhs, geom, grid, tol, strict=True):
    # over sloping columns the fixed-z curl has a domain mean that no periodic
    # potential can carry; without user data it is dropped, otherwise checked
    if not strict:
        rhs = rhs - rhs.mean()
    atol = 1e-13 * (np.max(np.abs(rhs)) * rhs.size + 1.0)
    return solve_stream(1.0 / geom.h, rhs, grid, tol=tol, atol=atol)


def reconstruct_magnetic(profile: ShearProfile, xi, b, p: ModelParams, sg: SigmaGrid, grid,
                         j_v0=None, tol: float = 1e-10):
    """Return (B_h, B_v, phi1, phi3) on the sigma levels.

    A supplied leading-order vertical current ``j_v0`` must vanish; otherwise
    :class:`JvNonzero` is raised.
    """
    if j_v0 is not None and np.any(np.asarray(j_v0) != 0.0):
        raise JvNonzero(f"leading-order vertical current must vanish (max {np.max(np.abs(j_v0)):.3e})")
    geom = _geometry(xi, b, p, sg, grid)
    Bs = profile.B_star
    jv1 = np.zeros(geom.h.shape) if profile.j_v1 is None else np.asarray(profile.j_v1, dtype=float)
    if jv1.ndim == geom.h.ndim + 1:
        jv1 = geom.depth_average(jv1)

    def curl_z(V):
        return geom.ddx_z(V[1], 0) - geom.ddx_z(V[0], 1)

    rhs1 = jv1 - geom.depth_average(curl_z(Bs))
    phi1 = _potential(rhs1, geom, grid, tol, strict=profile.j_v1 is not None)
    B1 = Bs + geom.column(perp_grad(phi1, grid) / geom.h)
    LB1 = op_L_star(B1, geom)
    phi3 = _potential(-geom.depth_average(curl_z(LB1)), geom, grid, tol, strict=False)
    mu = p.mu
    sm = np.sqrt(mu)
    B_h = sm * B1 + mu * sm * (LB1 + geom.column(perp_grad(phi3, grid) / geom.h))
    B_v = -mu * sm * geom.div_z(geom.from_bottom(B1))
    return B_h, B_v, phi1, phi3


def reconstruct(u_bar, profile: ShearProfile, b, p, sg, grid, dudt=None, j_v0=None) -> ReconstructedFields:
    xi = profile.xi
    U_h, U_v = reconstruct_velocity(u_bar, profile, xi, b, p, sg, grid)
    B_h, B_v, phi1, phi3 = reconstruct_magnetic(profile, xi, b, p, sg, grid, j_v0=j_v0)
    rec = ReconstructedFields(U_h, U_v, B_h, B_v, phi1, phi3, _geometry(xi, b, p, sg, grid))
    if dudt is not None:
        rec.P_nh = nonhydrostatic_pressure(rec, dudt, p)
    return rec


# ---------------------------------------------------------------------------
# pressure


def _pressure_over_eps(rec: ReconstructedFields, dudt, p: ModelParams, dUs_dt=None):
    """(1/eps) P_nh = int_z^surface (d_t U_v + eps U_h.grad U_v + eps/mu U_v d_z U_v
                                      - eps B_h.grad B_v + eps/mu B_v d_z B_v)."""
    g = rec.geom
    mu, eps = p.mu, p.eps
    if mu == 0.0:
        return np.zeros_like(rec.U_v)
    dtUv = -mu * g.div_z(g.from_bottom(g.column(dudt)))
    if dUs_dt is not None:
        dtUv = dtUv - mu * np.sqrt(mu) * g.div_z(g.from_bottom(dUs_dt))
    gUv, gBv = g.grad_z(rec.U_v), g.grad_z(rec.B_v)
    integrand = (dtUv + eps * np.sum(rec.U_h * gUv, axis=0) + (eps / mu) * rec.U_v * g.ddz(rec.U_v)
                 - eps * np.sum(rec.B_h * gBv, axis=0) + (eps / mu) * rec.B_v * g.ddz(rec.B_v))
    return g.to_top(integrand)


def nonhydrostatic_pressure(rec: ReconstructedFields, dudt, p: ModelParams, dUs_dt=None) -> np.ndarray:
    """Non-hydrostatic magnetic pressure profile P_nh (zero at the surface).

    ``dudt`` is the time derivative of the depth-averaged velocity, typically
    taken from the GN tendency; ``dUs_dt`` optionally adds the shear part of
    d_t U_v.
    """
    return p.eps * _pressure_over_eps(rec, dudt, p, dUs_dt)


def pressure_force_integral(rec: ReconstructedFields, dudt, p: ModelParams, dUs_dt=None) -> np.ndarray:
    """(1/eps) int grad P_nh dz, evaluated from the reconstructed profiles."""
    g = rec.geom
    return g.integrate(g.grad_z(_pressure_over_eps(rec, dudt, p, dUs_dt)))


def pressure_force_operator(u_bar, dudt, xi, b, p: ModelParams, grid) -> np.ndarray:
    """mu h F(d_t u + eps u.grad u) + mu eps h D(u)."""
    h = depth(xi, b, p)
    ugu = np.stack([sum(u_bar[k] * ddx(u_bar[i], grid, k) for k in range(grid.ndim)) for i in range(2)])
    return p.mu * h * op_F(dudt + p.eps * ugu, h, b, grid, p) + p.mu * p.eps * h * op_D(u_bar, h, b, grid, p)


# ---------------------------------------------------------------------------
# residuals


def residual_oracle(rec: ReconstructedFields, profile: ShearProfile, p: ModelParams) -> dict:
    """Max-norm residuals of the scaled incompressibility/solenoidal and curl relations.

    Evaluated on staggered sigma mid-levels, where the vertical derivative is
    the exact inverse of the cumulative trapezoid:

        div_U  = mu div U_h + d_z U_v
        div_B  = mu div B_h + d_z B_v
        curl_U = sqrt(mu) (grad U_v - d_z U_h) - mu omega_h^perp
        curl_B = sqrt(mu) (grad B_v - d_z B_h) - mu j_h^perp
    """
    g = rec.geom
    mu, sm = p.mu, np.sqrt(p.mu)

    def divergence(Vh, Vv):
        return mu * sum(g.ddx_z_mid(Vh[k], k) for k in range(2)) + g.dz_mid(Vv)

    def curl_defect(Vh, Vv, src):
        gV = np.stack([g.ddx_z_mid(Vv, k) for k in range(2)])
        return sm * (gV - g.dz_mid(Vh)) - mu * g.mid(perp(src))

    return {
        "div_U": float(np.max(np.abs(divergence(rec.U_h, rec.U_v)))),
        "div_B": float(np.max(np.abs(divergence(rec.B_h, rec.B_v)))),
        "curl_U": float(np.max(np.abs(curl_defect(rec.U_h, rec.U_v, profile.omega_h)))),
        "curl_B": float(np.max(np.abs(curl_defect(rec.B_h, rec.B_v, profile.j_h)))),
    }
