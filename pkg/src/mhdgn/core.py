"""Grids, dimensionless parameters, field containers and diagnostics.

Array layout conventions used throughout the package:

* scalar fields: ``grid.shape`` (``(nx,)`` in 1D, ``(nx, ny)`` in 2D)
* vector fields: ``(2, nx, ny)``; component axis first
* tensor fields: ``(2, 2, nx, ny)``; ``T[i, j]`` is row i, column j
* vertical profiles: ``(nsigma, nx, ny)`` with vector/tensor axes in front

Horizontal derivatives are periodic second-order centered differences
built with ``np.roll``.  The gradient and divergence built from the same
centered difference are an exactly adjoint (mimetic) pair, so the
divergence of a discrete perpendicular gradient vanishes to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

H_MIN = 1e-6


class MHDGNError(Exception):
    """Base class for solver errors."""


class DepthTooSmall(MHDGNError):
    pass


class NonPositiveScale(MHDGNError):
    pass


class ConstraintViolation(MHDGNError):
    pass


class CFLViolation(MHDGNError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameters of the shallow MHD hierarchy."""

    mu: float
    eps: float
    beta: float
    h_min: float = H_MIN

    def __post_init__(self):
        # mu = 0 is the hydrostatic limit used by the reduction checks
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def replace(self, **kw) -> "ModelParams":
        d = dict(mu=self.mu, eps=self.eps, beta=self.beta, h_min=self.h_min)
        d.update(kw)
        return ModelParams(**d)


@dataclass(frozen=True)
class DimensionalScales:
    """Characteristic scales of a dimensional problem (SI or any consistent units)."""

    H0: float
    L: float
    a_s: float
    a_b: float
    g: float = 9.81
    rho: float = 1.0
    mu0: float = 1.0

    def __post_init__(self):
        for name in ("H0", "L", "a_s", "a_b", "g", "rho", "mu0"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise NonPositiveScale(f"{name} must be strictly positive, got {v}")

    def params(self, h_min: float = H_MIN) -> ModelParams:
        return ModelParams(
            mu=self.H0**2 / self.L**2,
            eps=self.a_s / self.H0,
            beta=self.a_b / self.H0,
            h_min=h_min,
        )

    @property
    def time(self) -> float:
        return self.L / math.sqrt(self.g * self.H0)

    def unit(self, name: str) -> float:
        """Divisor turning the dimensional field ``name`` into its dimensionless form."""
        mu = self.H0**2 / self.L**2
        vel = self.a_s * math.sqrt(self.g / self.H0)
        mag = self.a_s * math.sqrt(mu * self.rho * self.g / self.H0)
        units = {
            "x": self.L,
            "y": self.L,
            "z": self.H0,
            "t": self.time,
            "xi": self.a_s,
            "b": self.a_b,
            "U_h": vel,
            "U_v": vel * self.L / self.H0,
            "B_h": mag,
            "B_v": mag * self.L / self.H0,
            "P": self.rho * self.g * self.H0,
        }
        try:
            return units[name]
        except KeyError:
            raise KeyError(f"no dimensional scaling known for field {name!r}") from None


def nondimensionalize(dim_fields: dict, scales: DimensionalScales):
    """Scale dimensional fields to dimensionless ones.

    ``dim_fields`` maps field names (``xi``, ``U_h``, ``U_v``, ``B_h``,
    ``B_v``, ``P``, ``x``, ``z``, ``t``, ``b``) to arrays.  Returns the
    dimensionless dict and the matching :class:`ModelParams`.
    """
    out = {k: np.asarray(v, dtype=float) / scales.unit(k) for k, v in dim_fields.items()}
    return out, scales.params()


def redimensionalize(fields: dict, scales: DimensionalScales) -> dict:
    return {k: np.asarray(v, dtype=float) * scales.unit(k) for k, v in fields.items()}


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid1D:
    nx: int
    length: float = 2 * math.pi
    ghost: int = 2

    def __post_init__(self):
        if self.nx < 4:
            raise ValueError("Grid1D needs at least 4 cells")
        if self.length <= 0:
            raise ValueError("domain length must be positive")

    ndim = 1

    @property
    def shape(self) -> tuple:
        return (self.nx,)

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def spacing(self) -> tuple:
        return (self.dx,)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def cell_volume(self) -> float:
        return self.dx

    def coords(self) -> tuple:
        return (self.x,)

    def refine(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.nx * factor, self.length, self.ghost)


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic 2D grid.

    ``ny == 1`` is accepted and represents y-independent data: every
    y-derivative of such a field is identically zero.
    """

    nx: int
    ny: int
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    ghost: int = 2

    def __post_init__(self):
        if self.nx < 4 or (self.ny < 4 and self.ny != 1):
            raise ValueError("Grid2D needs at least 4 cells per direction (or ny == 1)")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain extents must be positive")

    ndim = 2

    @property
    def shape(self) -> tuple:
        return (self.nx, self.ny)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def spacing(self) -> tuple:
        return (self.dx, self.dy)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    def coords(self) -> tuple:
        return tuple(np.meshgrid(self.x, self.y, indexing="ij"))

    def refine(self, factor: int = 2) -> "Grid2D":
        ny = self.ny if self.ny == 1 else self.ny * factor
        return Grid2D(self.nx * factor, ny, self.lx, self.ly, self.ghost)


# ---------------------------------------------------------------------------
# periodic difference operators


def ddx(f: np.ndarray, grid, axis: int = 0) -> np.ndarray:
    """Centered first derivative along horizontal direction ``axis`` (0 = x, 1 = y)."""
    ax = axis - grid.ndim
    if f.shape[ax] == 1:
        return np.zeros_like(f)
    h = grid.spacing[axis]
    return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h)


def d2(f: np.ndarray, grid, axis: int = 0, coef: np.ndarray | None = None) -> np.ndarray:
    """Compact second difference ``d/dx(coef df/dx)`` with face-averaged coefficient."""
    ax = axis - grid.ndim
    if f.shape[ax] == 1:
        return np.zeros_like(f)
    h = grid.spacing[axis]
    fp = np.roll(f, -1, axis=ax)
    if coef is None:
        return (fp - 2.0 * f + np.roll(f, 1, axis=ax)) / h**2
    cp = 0.5 * (coef + np.roll(coef, -1, axis=ax))
    flux = cp * (fp - f)
    return (flux - np.roll(flux, 1, axis=ax)) / h**2


def grad(f: np.ndarray, grid) -> np.ndarray:
    return np.stack([ddx(f, grid, k) for k in range(grid.ndim)])


def div(v: np.ndarray, grid) -> np.ndarray:
    return sum(ddx(v[k], grid, k) for k in range(grid.ndim))


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate a 2-vector field by +90 degrees: (v1, v2) -> (-v2, v1)."""
    return np.stack([-v[1], v[0]])


def perp_grad(f: np.ndarray, grid) -> np.ndarray:
    """(-d_y f, d_x f)."""
    return np.stack([-ddx(f, grid, 1), ddx(f, grid, 0)])


def curl2(v: np.ndarray, grid) -> np.ndarray:
    """Scalar curl d_x v2 - d_y v1 (the adjoint partner of ``perp_grad``)."""
    return ddx(v[1], grid, 0) - ddx(v[0], grid, 1)


def tensor_div(T: np.ndarray, grid) -> np.ndarray:
    """(div T)_j = sum_i d_i T_ij."""
    return np.stack([sum(ddx(T[i, j], grid, i) for i in range(grid.ndim)) for j in range(T.shape[1])])


def jacobian(v: np.ndarray, grid) -> np.ndarray:
    """G[i, j] = d_j v_i, so that G @ w = (w . grad) v."""
    d = v.shape[0]
    return np.stack([np.stack([ddx(v[i], grid, j) if j < grid.ndim else np.zeros_like(v[i])
                               for j in range(d)]) for i in range(d)])


# ---------------------------------------------------------------------------
# bathymetry and states


@dataclass(frozen=True)
class Bathymetry:
    b: np.ndarray
    grad_b: np.ndarray
    hess_b: np.ndarray

    @classmethod
    def from_array(cls, grid, b) -> "Bathymetry":
        b = np.broadcast_to(np.asarray(b, dtype=float), grid.shape).copy()
        gb = grad(b, grid)
        hb = np.stack([grad(gb[i], grid) for i in range(grid.ndim)])
        return cls(b, gb, hb)

    @classmethod
    def flat(cls, grid) -> "Bathymetry":
        return cls.from_array(grid, np.zeros(grid.shape))

    @classmethod
    def gaussian(cls, grid, amplitude=1.0, width=0.5, center=None) -> "Bathymetry":
        xs = grid.coords()
        if center is None:
            center = [0.5 * L for L in ((grid.length,) if grid.ndim == 1 else (grid.lx, grid.ly))]
        r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
        if grid.ndim == 2 and grid.ny == 1:
            r2 = (xs[0] - center[0]) ** 2
        return cls.from_array(grid, amplitude * np.exp(-r2 / (2 * width**2)))

    def check(self, p: ModelParams) -> None:
        if np.max(p.beta * self.b) >= 1.0:
            raise DepthTooSmall("bottom pierces the mean surface (max beta*b >= 1)")


def depth(xi: np.ndarray, b: Bathymetry | np.ndarray, p: ModelParams, check: bool = True) -> np.ndarray:
    """h = 1 + eps*xi - beta*b; raises :class:`DepthTooSmall` when h <= h_min."""
    bb = b.b if isinstance(b, Bathymetry) else b
    h = 1.0 + p.eps * xi - p.beta * bb
    if check and np.min(h) <= p.h_min:
        raise DepthTooSmall(f"min depth {np.min(h):.3e} <= h_min={p.h_min:g}")
    return h


@dataclass
class SurfaceState1D:
    xi: np.ndarray
    u_bar: np.ndarray
    R: np.ndarray
    Rb: np.ndarray
    t: float = 0.0

    @classmethod
    def rest(cls, grid: Grid1D) -> "SurfaceState1D":
        z = np.zeros(grid.shape)
        return cls(z.copy(), z.copy(), z.copy(), z.copy())

    def validate(self, b: Bathymetry, p: ModelParams) -> None:
        depth(self.xi, b, p)
        if np.min(self.R) < 0 or np.min(self.Rb) < 0:
            raise ValueError("closure scalars R, Rb must be non-negative")

    def fields(self) -> dict:
        return {"xi": self.xi, "u": self.u_bar, "R": self.R, "Rb": self.Rb}


@dataclass
class SurfaceState2D:
    xi: np.ndarray
    u_bar: np.ndarray
    B_bar: np.ndarray
    R: np.ndarray
    Rb: np.ndarray
    Rm: np.ndarray
    t: float = 0.0

    @classmethod
    def rest(cls, grid: Grid2D) -> "SurfaceState2D":
        s = grid.shape
        return cls(np.zeros(s), np.zeros((2,) + s), np.zeros((2,) + s),
                   np.zeros((2, 2) + s), np.zeros((2, 2) + s), np.zeros((2, 2) + s))

    @property
    def Rb_S(self) -> np.ndarray:
        """M Rb + Rb M^t with M the +90 degree rotation."""
        return np.einsum("ik,kj...->ij...", ROT, self.Rb) + np.einsum("ik...,jk->ij...", self.Rb, ROT)

    def validate(self, b: Bathymetry, p: ModelParams, grid: Grid2D | None = None,
                 constraint_tol: float | None = None) -> None:
        h = depth(self.xi, b, p)
        for name in ("R", "Rb"):
            T = getattr(self, name)
            if np.max(np.abs(T[0, 1] - T[1, 0])) > 1e-12 * max(1.0, np.max(np.abs(T))):
                raise ValueError(f"{name} is not symmetric")
            if np.min(sym_min_eig(T)) < -1e-12:
                raise ValueError(f"{name} is not positive semidefinite")
        if constraint_tol is not None and grid is not None:
            c = np.max(np.abs(div(h * self.B_bar, grid)))
            if c > constraint_tol:
                raise ConstraintViolation(f"div(h B) = {c:.3e} exceeds {constraint_tol:.1e}")

    def fields(self) -> dict:
        return {
            "xi": self.xi, "u1": self.u_bar[0], "u2": self.u_bar[1],
            "B1": self.B_bar[0], "B2": self.B_bar[1],
            "R11": self.R[0, 0], "R12": self.R[0, 1], "R22": self.R[1, 1],
            "Rb11": self.Rb[0, 0], "Rb12": self.Rb[0, 1], "Rb22": self.Rb[1, 1],
            "Rm11": self.Rm[0, 0], "Rm12": self.Rm[0, 1], "Rm21": self.Rm[1, 0], "Rm22": self.Rm[1, 1],
        }


ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def sym_min_eig(T: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of a field of symmetric 2x2 tensors."""
    a, c, d = T[0, 0], 0.5 * (T[0, 1] + T[1, 0]), T[1, 1]
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + c**2)


# ---------------------------------------------------------------------------
# diagnostics


def mass(state, b=None, p=None, grid=None) -> float:
    """Integral of the surface elevation, sum(xi) * cell volume."""
    if grid is None:
        raise TypeError("mass() needs the grid")
    return float(np.sum(state.xi) * grid.cell_volume)


def constraint_norm(state: SurfaceState2D, b: Bathymetry, p: ModelParams, grid: Grid2D) -> float:
    """Max-norm of the centered divergence of h*B_bar."""
    h = depth(state.xi, b, p, check=False)
    return float(np.max(np.abs(div(h * state.B_bar, grid))))


def energy(state, b: Bathymetry, p: ModelParams, grid) -> float:
    """0.5 * integral of (xi^2 + h|u|^2 + h|B|^2) (hydrostatic part only)."""
    h = depth(state.xi, b, p, check=False)
    u = state.u_bar if state.u_bar.ndim > h.ndim else state.u_bar[None]
    e = state.xi**2 + h * np.sum(u**2, axis=0)
    B = getattr(state, "B_bar", None)
    if B is not None:
        e = e + h * np.sum(B**2, axis=0)
    return float(0.5 * np.sum(e) * grid.cell_volume)
