"""Manufactured smooth solutions for convergence studies (built with sympy)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .core import Bathymetry, Grid1D, ModelParams, SurfaceState1D

x, t = sp.symbols("x t", real=True)


def F_1d(g, h, b):
    bx = sp.diff(b, x)
    return (-sp.diff(h**3 * sp.diff(g, x), x) / (3 * h)
            + (sp.diff(h**2 * g * bx, x) - h**2 * sp.diff(g, x) * bx) / (2 * h) + g * bx**2)


def D_1d(f, h, b):
    fx, bx, bxx = sp.diff(f, x), sp.diff(b, x), sp.diff(b, x, 2)
    return (2 * sp.diff(h**3 * fx**2, x) / (3 * h) + h * fx**2 * bx
            + sp.diff(h**2 * f**2 * bxx, x) / (2 * h) + f**2 * bxx * bx)


@dataclass(frozen=True)
class Manufactured1D:
    """Exact fields and the source terms that make them solve the 1D magnetic GN system."""

    params: ModelParams
    exact: dict
    sources: dict
    bottom: object

    def bathymetry(self, grid: Grid1D) -> Bathymetry:
        return Bathymetry.from_array(grid, self.bottom(grid.x))

    def state(self, grid: Grid1D, time: float = 0.0) -> SurfaceState1D:
        X = grid.x
        return SurfaceState1D(*(self.exact[k](X, time) for k in ("xi", "u", "R", "Rb")), t=time)

    def forcing(self, grid: Grid1D):
        X = grid.x

        def f(time):
            return {k: fn(X, time) for k, fn in self.sources.items()}
        return f


@lru_cache(maxsize=8)
def gn1d_manufactured(mu: float = 0.1, eps: float = 0.2, beta: float = 0.3) -> Manufactured1D:
    """Smooth periodic travelling fields with non-trivial bottom, shear and magnetic closure."""
    b = sp.sin(x) / 5
    xi = sp.sin(x - t) / 5 + sp.cos(2 * x + t) / 20
    u = 3 * sp.cos(x + t / 2) / 10
    R = (sp.Rational(3, 2) + sp.sin(x - t)) / 10
    Rb = (sp.Rational(6, 5) + sp.cos(x + t)) / 20
    M, E, B = sp.nsimplify(mu), sp.nsimplify(eps), sp.nsimplify(beta)
    h = 1 + E * xi - B * b
    bb = B * b
    acc = sp.diff(u, t) + E * u * sp.diff(u, x)
    S = {
        "xi": sp.diff(xi, t) + sp.diff(h * u, x),
        "u": (acc + M * F_1d(acc, h, bb) + sp.diff(xi, x) + E * M * D_1d(u, h, bb)
              + E * M * sp.diff(R - Rb, x) / h),
        "R": sp.diff(R, t) + E * (u * sp.diff(R, x) + 3 * sp.diff(u, x) * R),
        "Rb": sp.diff(Rb, t) + E * (u * sp.diff(Rb, x) - sp.diff(u, x) * Rb),
    }

    def fn(expr):
        f = sp.lambdify((x, t), expr, "numpy")
        return lambda X, T: np.broadcast_to(np.asarray(f(X, T), dtype=float), np.shape(X)).copy()

    exact = {"xi": fn(xi), "u": fn(u), "R": fn(R), "Rb": fn(Rb)}
    sources = {k: fn(v) for k, v in S.items()}
    fb = fn(b)
    return Manufactured1D(ModelParams(mu, eps, beta), exact, sources, lambda X: fb(X, 0.0))
