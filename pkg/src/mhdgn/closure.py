"""Transport of the shear closure tensors.

With G[i, j] = d_j u_i the depth-integrated shear outer products obey

    dR/dt  = -eps [u.grad R  + (div u) R  + G R  + R G^t]
    dRb/dt = -eps [u.grad Rb + (div u) Rb] + eps (G Rb + Rb G^t)
    dRm/dt = -eps [u.grad Rm + (div u) Rm] + eps (G Rm - Rm G^t)

(Rb is stretched like a frozen-in field, R like a velocity shear; Rm couples
the two.)  In one dimension R and Rb reduce to scalars:

    dR/dt  = -eps (u R_x  + 3 u_x R)
    dRb/dt = -eps (u Rb_x -   u_x Rb)
"""

from __future__ import annotations

import numpy as np

from .core import MHDGNError, ModelParams, ddx, div, jacobian

ADVECTION = ("centered", "upwind")


class AsymmetricInput(MHDGNError):
    pass


def _advect(f, u, grid, scheme):
    """u . grad f for a scalar/tensor field ``f`` with trailing grid axes."""
    out = np.zeros_like(f)
    for k in range(grid.ndim):
        ax = k - grid.ndim
        if f.shape[ax] == 1:
            continue
        if scheme == "centered":
            out += u[k] * ddx(f, grid, k)
        elif scheme == "upwind":
            dx = grid.spacing[k]
            fwd = (np.roll(f, -1, axis=ax) - f) / dx
            bwd = (f - np.roll(f, 1, axis=ax)) / dx
            out += np.maximum(u[k], 0) * bwd + np.minimum(u[k], 0) * fwd
        else:
            raise ValueError(f"unknown advection scheme {scheme!r}")
    return out


def _matmul(A, B):
    return np.einsum("ik...,kj...->ij...", A, B)


def _transpose(A):
    return np.swapaxes(A, 0, 1)


def _check_symmetric(T, name, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(T))))
    if np.max(np.abs(T[0, 1] - T[1, 0])) > tol * scale:
        raise AsymmetricInput(f"{name} is not symmetric")


# ---------------------------------------------------------------------------
# 1D


def rhs_R_1d(R, u_bar, p: ModelParams, grid, advection="centered"):
    ux = ddx(u_bar, grid)
    return -p.eps * (_advect(R, u_bar[None], grid, advection) + 3.0 * ux * R)


def rhs_Rb_1d(Rb, u_bar, p: ModelParams, grid, advection="centered"):
    ux = ddx(u_bar, grid)
    return -p.eps * (_advect(Rb, u_bar[None], grid, advection) - ux * Rb)


# ---------------------------------------------------------------------------
# 2D


def _transport(T, u, grid, advection):
    return _advect(T, u, grid, advection) + div(u, grid) * T


def rhs_R_2d(R, u_bar, p: ModelParams, grid, advection="centered"):
    _check_symmetric(R, "R")
    A = _matmul(jacobian(u_bar, grid), R)
    return -p.eps * (_transport(R, u_bar, grid, advection) + A + _transpose(A))


def rhs_Rb_2d(Rb, u_bar, p: ModelParams, grid, advection="centered"):
    _check_symmetric(Rb, "Rb")
    A = _matmul(jacobian(u_bar, grid), Rb)
    return -p.eps * (_transport(Rb, u_bar, grid, advection) - A - _transpose(A))


def rhs_Rm_2d(Rm, u_bar, p: ModelParams, grid, advection="centered"):
    G = jacobian(u_bar, grid)
    stretch = _matmul(G, Rm) - _matmul(Rm, _transpose(G))
    return -p.eps * (_transport(Rm, u_bar, grid, advection) - stretch)
