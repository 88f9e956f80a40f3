"""Dispersive operators, column (sigma) operators and elliptic solvers.

The non-hydrostatic operators act on depth-averaged fields:

    F g   = -1/(3h) grad(h^3 div g) + 1/(2h) (grad(h^2 grad b . g) - h^2 grad b div g)
            + grad b (grad b . g)
    D g   = -2 R1(d_x g . (d_y g)^perp + (div g)^2) + R2(g . (g . grad) grad b)
    R1 f  = -1/(3h) grad(h^3 f) - h/2 f grad b
    R2 f  =  1/(2h) grad(h^2 f) + f grad b

``b`` here is the scaled bottom ``beta * b``.  The leading ``h^3`` term of
F uses compact face stencils along each axis (cross terms centered), the
rest uses centered differences.  With that choice ``h (1 + mu F)`` is a
symmetric positive definite matrix, which is what the PCG inversion
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .core import (
    Bathymetry, DepthTooSmall, MHDGNError, ModelParams, ddx, d2, depth, grad, perp,
)


class EllipticDivergence(MHDGNError):
    pass


class IncompatibleRHS(MHDGNError):
    pass


def _check_h(h, p: ModelParams | None = None):
    hmin = 1e-6 if p is None else p.h_min
    if np.min(h) <= hmin:
        raise DepthTooSmall(f"min depth {np.min(h):.3e} <= {hmin:g}")


def _bottom(b: Bathymetry, p: ModelParams | None):
    beta = 1.0 if p is None else p.beta
    return beta * b.grad_b, beta * b.hess_b


# ---------------------------------------------------------------------------
# 1D operators


def op_F_1d(g, h, b: Bathymetry, grid, p: ModelParams | None = None):
    """1D non-hydrostatic operator F applied to the scalar field ``g``.

    ``p`` only supplies beta (the bottom scaling); with ``p=None`` the
    bathymetry is used as given.
    """
    _check_h(h, p)
    gb, _ = _bottom(b, p)
    bx = gb[0]
    lead = -d2(g, grid, 0, coef=h**3) / (3.0 * h)
    mid = (ddx(h**2 * g * bx, grid) - h**2 * ddx(g, grid) * bx) / (2.0 * h)
    return lead + mid + g * bx**2


def op_R1_1d(f, h, b, grid, p=None):
    gb, _ = _bottom(b, p)
    return -ddx(h**3 * f, grid) / (3.0 * h) - 0.5 * h * f * gb[0]


def op_R2_1d(f, h, b, grid, p=None):
    gb, _ = _bottom(b, p)
    return ddx(h**2 * f, grid) / (2.0 * h) + f * gb[0]


def op_D_1d(f, h, b: Bathymetry, grid, p: ModelParams | None = None):
    """1D quadratic dispersive operator D(f) = -2 R1((f_x)^2) + R2(f^2 b_xx)."""
    _check_h(h, p)
    _, hb = _bottom(b, p)
    fx = ddx(f, grid)
    return -2.0 * op_R1_1d(fx**2, h, b, grid, p) + op_R2_1d(f**2 * hb[0, 0], h, b, grid, p)


# ---------------------------------------------------------------------------
# 2D operators


def op_R1(f, h, b: Bathymetry, grid, p: ModelParams | None = None):
    _check_h(h, p)
    gb, _ = _bottom(b, p)
    return -grad(h**3 * f, grid) / (3.0 * h) - 0.5 * h * f * gb


def op_R2(f, h, b: Bathymetry, grid, p: ModelParams | None = None):
    _check_h(h, p)
    gb, _ = _bottom(b, p)
    return grad(h**2 * f, grid) / (2.0 * h) + f * gb


def op_F_2d(g, h, b: Bathymetry, grid, p: ModelParams | None = None):
    """2D non-hydrostatic operator F applied to the vector field ``g`` (shape (2, nx, ny))."""
    _check_h(h, p)
    gb, _ = _bottom(b, p)
    h3 = h**3
    lead = np.stack([
        d2(g[0], grid, 0, coef=h3) + ddx(h3 * ddx(g[1], grid, 1), grid, 0),
        d2(g[1], grid, 1, coef=h3) + ddx(h3 * ddx(g[0], grid, 0), grid, 1),
    ]) / (-3.0 * h)
    divg = ddx(g[0], grid, 0) + ddx(g[1], grid, 1)
    bg = gb[0] * g[0] + gb[1] * g[1]
    mid = (grad(h**2 * bg, grid) - h**2 * gb * divg) / (2.0 * h)
    return lead + mid + gb * bg


def op_D_2d(g, h, b: Bathymetry, grid, p: ModelParams | None = None):
    """2D quadratic dispersive operator D(g)."""
    _check_h(h, p)
    _, hb = _bottom(b, p)
    g1x, g1y = ddx(g[0], grid, 0), ddx(g[0], grid, 1)
    g2x, g2y = ddx(g[1], grid, 0), ddx(g[1], grid, 1)
    # d_x g . (d_y g)^perp with w^perp = (-w2, w1)
    cross = -g1x * g2y + g2x * g1y
    f1 = cross + (g1x + g2y) ** 2
    f2 = sum(g[i] * g[j] * hb[i, j] for i in range(2) for j in range(2))
    return -2.0 * op_R1(f1, h, b, grid, p) + op_R2(f2, h, b, grid, p)


def op_F(g, h, b, grid, p=None):
    return op_F_1d(g, h, b, grid, p) if grid.ndim == 1 else op_F_2d(g, h, b, grid, p)


def op_D(g, h, b, grid, p=None):
    return op_D_1d(g, h, b, grid, p) if grid.ndim == 1 else op_D_2d(g, h, b, grid, p)


def _F_diagonal(h, b, grid, p):
    """Diagonal of h * F (used as Jacobi preconditioner)."""
    gb, _ = _bottom(b, p)
    h3 = h**3
    diags = []
    for k in range(grid.ndim):
        ax = k - grid.ndim
        if h.shape[ax] == 1:
            face = np.zeros_like(h)
        else:
            face = (0.5 * (h3 + np.roll(h3, -1, axis=ax)) + 0.5 * (h3 + np.roll(h3, 1, axis=ax))) \
                / (3.0 * grid.spacing[k] ** 2)
        diags.append(face + h * gb[k] ** 2)
    return diags[0] if grid.ndim == 1 else np.stack(diags)


# ---------------------------------------------------------------------------
# Krylov solver


def pcg(apply, rhs, diag, tol=1e-10, maxiter=None, zero_mean=False, x0=None):
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when ``||r|| <= tol * ||rhs||``.  With ``zero_mean`` the iterates
    are kept in the zero-mean subspace (periodic gauge).
    Returns ``(x, iterations, relative_residual)``.
    """
    def proj(v):
        return v - v.mean() if zero_mean else v

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    maxiter = 10 * rhs.size if maxiter is None else maxiter
    x = np.zeros_like(rhs) if x0 is None else proj(x0.copy())
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    r = proj(r)
    z = proj(r / diag)
    d = z.copy()
    rz = np.vdot(r, z)
    res = np.linalg.norm(r) / bnorm
    for it in range(1, maxiter + 1):
        if res <= tol:
            return x, it - 1, res
        Ad = apply(d)
        dAd = np.vdot(d, Ad)
        if dAd <= 0:
            raise EllipticDivergence("operator is not positive definite along the search direction")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        r = proj(r)
        res = np.linalg.norm(r) / bnorm
        z = proj(r / diag)
        rz_new = np.vdot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    if res <= tol:
        return x, maxiter, res
    raise EllipticDivergence(f"PCG did not converge: residual {res:.3e} after {maxiter} iterations")


def apply_modified_momentum(v, h, b, p: ModelParams, grid):
    """(1 + mu F) v."""
    if p.mu == 0.0:
        return v.copy()
    return v + p.mu * op_F(v, h, b, grid, p)


def solve_modified_momentum(rhs, h, b: Bathymetry, p: ModelParams, grid, tol=1e-10, x0=None):
    """Return v with (1 + mu F) v = rhs.

    Solved as the symmetric system h (1 + mu F) v = h rhs by PCG.  For
    ``mu == 0`` the input is returned unchanged (bit-exact copy).
    """
    if p.mu == 0.0:
        return rhs.copy()
    _check_h(h, p)
    if grid.ndim == 1:
        return _solve_modified_1d(rhs, h, b, p, grid)
    diag = h + p.mu * _F_diagonal(h, b, grid, p)

    def apply(v):
        return h * (v + p.mu * op_F(v, h, b, grid, p))

    v, _, _ = pcg(apply, h * rhs, diag, tol=tol, x0=x0)
    return v


def modified_matrix_1d(h, b, p: ModelParams, grid) -> sparse.csc_matrix:
    """Sparse periodic tridiagonal matrix of h (1 + mu F) in 1D."""
    n, dx, mu = h.size, grid.dx, p.mu
    gb, _ = _bottom(b, p)
    a = h**2 * gb[0]
    h3 = h**3
    cp = 0.5 * (h3 + np.roll(h3, -1))
    cm = np.roll(cp, 1)
    ap, am = np.roll(a, -1), np.roll(a, 1)
    main = h + mu * ((cp + cm) / (3 * dx**2) + h * gb[0] ** 2)
    upper = mu * (-cp / (3 * dx**2) + (ap - a) / (4 * dx))
    lower = mu * (-cm / (3 * dx**2) + (a - am) / (4 * dx))
    i = np.arange(n)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i + 1) % n, (i - 1) % n])
    return sparse.csc_matrix((np.concatenate([main, upper, lower]), (rows, cols)), shape=(n, n))


def _solve_modified_1d(rhs, h, b, p, grid):
    if not np.any(rhs):
        return np.zeros_like(rhs)
    try:
        v = splu(modified_matrix_1d(h, b, p, grid)).solve(h * rhs)
    except RuntimeError as e:
        raise EllipticDivergence(f"direct 1D solve failed: {e}") from e
    if not np.all(np.isfinite(v)):
        raise EllipticDivergence("direct 1D solve produced non-finite values")
    return v


def elliptic_apply(phi, coef, grid):
    """Compact discrete div(coef grad phi) on the periodic grid."""
    return sum(d2(phi, grid, k, coef=coef) for k in range(grid.ndim))


def solve_stream(coef, rhs, grid, tol=1e-10, gauge="periodic", maxiter=None, atol=0.0):
    """Solve div(coef grad phi) = rhs for a zero-mean periodic potential.

    The same operator also represents perp-div(coef perp-grad phi).  A zero
    right-hand side returns the zero field.  The periodic compatibility
    condition is checked as ``|mean(rhs)| <= 1e-10 max|rhs| + atol``.
    """
    if gauge != "periodic":
        raise ValueError(f"unsupported gauge {gauge!r}")
    coef = np.broadcast_to(coef, rhs.shape)
    if np.min(coef) <= 0:
        raise ValueError("elliptic coefficient must be strictly positive")
    scale = np.max(np.abs(rhs))
    if scale == 0.0:
        return np.zeros_like(rhs)
    if abs(rhs.mean()) > 1e-10 * scale + atol:
        raise IncompatibleRHS(f"right-hand side has mean {rhs.mean():.3e} under periodic gauge")
    diag = np.zeros_like(rhs)
    for k in range(grid.ndim):
        ax = k - grid.ndim
        if rhs.shape[ax] > 1:
            diag += (0.5 * (2 * coef + np.roll(coef, -1, axis=ax) + np.roll(coef, 1, axis=ax))) / grid.spacing[k] ** 2
    phi, _, _ = pcg(lambda v: -elliptic_apply(v, coef, grid), -(rhs - rhs.mean()), diag,
                    tol=tol, zero_mean=True, maxiter=maxiter)
    return phi


# ---------------------------------------------------------------------------
# column (sigma-coordinate) operators


@dataclass(frozen=True)
class SigmaGrid:
    """Uniform terrain-following levels z = -1 + beta b + sigma h, sigma in [0, 1]."""

    n: int = 32

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("SigmaGrid needs at least 8 levels")

    @property
    def sigma(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def dsigma(self) -> float:
        return 1.0 / (self.n - 1)


class ColumnGeometry:
    """Per-column vertical geometry on a sigma grid.

    Profiles have shape ``(..., n, nx, ny)``: the sigma axis sits right
    before the horizontal axes.  Horizontal derivatives of profiles are
    taken at fixed z, converting from sigma with
    grad|_z F = grad|_sigma F - dF/dsigma (beta grad b + sigma grad h) / h.
    """

    def __init__(self, h, b: Bathymetry, p: ModelParams, sg: SigmaGrid, grid):
        _check_h(h, p)
        self.grid, self.sg, self.p = grid, sg, p
        self.h = np.asarray(h, dtype=float)
        self.bottom = -1.0 + p.beta * b.b
        self.grad_h = grad(self.h, grid)
        self.grad_bottom = p.beta * b.grad_b
        self.flat = not (np.any(self.grad_h) or np.any(self.grad_bottom))
        s = sg.sigma.reshape((-1,) + (1,) * grid.ndim)
        self._s = s

    @classmethod
    def from_surface(cls, xi, b, p, sg, grid) -> "ColumnGeometry":
        return cls(depth(xi, b, p), b, p, sg, grid)

    @property
    def axis(self) -> int:
        return -(self.grid.ndim + 1)

    def z(self) -> np.ndarray:
        return self.bottom + self._s * self.h

    def column(self, f2d) -> np.ndarray:
        """Broadcast a horizontal field to every sigma level."""
        f2d = np.asarray(f2d)
        nh = self.grid.ndim
        lead = f2d.shape[:f2d.ndim - nh]
        return np.broadcast_to(np.expand_dims(f2d, axis=len(lead)),
                               lead + (self.sg.n,) + f2d.shape[f2d.ndim - nh:]).copy()

    def depth_average(self, f) -> np.ndarray:
        """(1/h) * integral over the column = trapezoid in sigma."""
        return np.trapezoid(f, dx=self.sg.dsigma, axis=self.axis)

    def star(self, f) -> np.ndarray:
        return f - np.expand_dims(self.depth_average(f), self.axis)

    def integrate(self, f) -> np.ndarray:
        """Integral over the whole column (dz)."""
        return self.h * self.depth_average(f)

    def from_bottom(self, f) -> np.ndarray:
        """Cumulative trapezoid integral from the bottom to each level (dz)."""
        ax = self.axis
        n = f.shape[ax]
        a = np.moveaxis(f, ax, 0)
        out = np.zeros_like(a)
        out[1:] = np.cumsum(0.5 * (a[1:] + a[:-1]), axis=0) * self.sg.dsigma
        out = np.moveaxis(out, 0, ax)
        assert out.shape[ax] == n
        return self.h * out

    def to_top(self, f) -> np.ndarray:
        """Cumulative trapezoid integral from each level to the surface (dz)."""
        total = np.expand_dims(self.integrate(f), self.axis)
        return total - self.from_bottom(f)

    def ddsigma(self, f) -> np.ndarray:
        return np.gradient(f, self.sg.dsigma, axis=self.axis, edge_order=2)

    def ddz(self, f) -> np.ndarray:
        return self.ddsigma(f) / self.h

    # staggered (mid-level) versions: exact partners of the cumulative trapezoid
    def mid(self, f) -> np.ndarray:
        ax = self.axis
        n = f.shape[ax]
        return 0.5 * (np.take(f, range(1, n), axis=ax) + np.take(f, range(n - 1), axis=ax))

    def dsigma_mid(self, f) -> np.ndarray:
        return np.diff(f, axis=self.axis) / self.sg.dsigma

    def dz_mid(self, f) -> np.ndarray:
        return self.dsigma_mid(f) / self.h

    def ddx_z_mid(self, f, k: int) -> np.ndarray:
        out = ddx(self.mid(f), self.grid, k)
        if not self.flat:
            s = 0.5 * (self._s[1:] + self._s[:-1])
            out = out - self.dsigma_mid(f) * (self.grad_bottom[k] + s * self.grad_h[k]) / self.h
        return out

    def _correction(self, k):
        return (self.grad_bottom[k] + self._s * self.grad_h[k]) / self.h

    def ddx_z(self, f, k: int) -> np.ndarray:
        """Horizontal derivative along axis ``k`` at fixed z."""
        out = ddx(f, self.grid, k)
        if not self.flat:
            out = out - self.ddsigma(f) * self._correction(k)
        return out

    def grad_z(self, f) -> np.ndarray:
        return np.stack([self.ddx_z(f, k) for k in range(self.grid.ndim)])

    def div_z(self, v) -> np.ndarray:
        return sum(self.ddx_z(v[k], k) for k in range(self.grid.ndim))


def depth_average(f, geom: ColumnGeometry):
    return geom.depth_average(f)


def star_projection(f, geom: ColumnGeometry):
    """f - depth_average(f)."""
    return geom.star(f)


def op_L(f, geom: ColumnGeometry):
    """L f = int_z^surface grad div int_bottom^z f  (vector profile in, vector profile out)."""
    inner = geom.from_bottom(f)
    return geom.to_top(geom.grad_z(geom.div_z(inner)))


def op_L_star(f, geom: ColumnGeometry):
    return geom.star(op_L(f, geom))
