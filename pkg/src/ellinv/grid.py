"""Uniform 2D grids, scalar fields on them, and discrete calculus.

Node ordering convention (used everywhere, including file I/O): fields are
stored as ``(ny, nx)`` arrays, row ``j`` holding the nodes at ``y = y0 + j*hy``
with ``x`` varying fastest.  Flattening is C row-major, so the node ``(i, j)``
(``i`` along x, ``j`` along y) sits at flat index ``j*nx + i``.

Two kinds of quadrature live here:

* node quadrature -- tensor-product trapezoidal weights, used for all
  integrals of node-valued quantities (`integrate`, `inner`);
* face quadrature -- gradients sampled at cell-face midpoints with
  trapezoidal weights in the transverse direction, used for Dirichlet-energy
  style integrals (`grad_inner`).  Face quadrature matches the face averaging
  of the five-point flux stencil, which makes summation-by-parts identities
  hold to solver precision rather than just to discretization order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class GridMismatchError(ValueError):
    """Two fields on different grids were combined."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform node-centered grid on the rectangle [x0,x1] x [y0,y1]."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs nx,ny >= 3, got nx={self.nx}, ny={self.ny}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("grid bounds must satisfy x1 > x0 and y1 > y0")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def xs(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of shape (ny, nx)."""
        return np.meshgrid(self.xs(), self.ys())

    def interior(self) -> tuple[slice, slice]:
        """Index slices selecting interior nodes of an (ny, nx) array."""
        return (slice(1, self.ny - 1), slice(1, self.nx - 1))


def unit_square_grid(n: int = 49, lo: float = -1.0, hi: float = 1.0) -> Grid2D:
    """Square n x n grid on [lo,hi]^2 (defaults match the 49x49 test domain)."""
    return Grid2D(lo, hi, lo, hi, n, n)


class Field2D:
    """Scalar function sampled on the nodes of a :class:`Grid2D`.

    ``values`` is an (ny, nx) float array; every entry must be finite.
    Arithmetic between fields requires identical grids.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid2D, values):
        arr = np.asarray(values, dtype=float)
        if arr.size == grid.n_nodes:
            arr = arr.reshape(grid.shape)
        if arr.shape != grid.shape:
            raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = arr

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "Field2D":
        X, Y = grid.meshgrid()
        return cls(grid, np.broadcast_to(np.asarray(fn(X, Y), dtype=float), grid.shape).copy())

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "Field2D":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "Field2D":
        return Field2D(self.grid, self.values.copy())

    def flat(self) -> np.ndarray:
        """Values in documented node order (row-major, x fastest)."""
        return self.values.ravel()

    def _check(self, other: "Field2D") -> None:
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values + other.values)
        return Field2D(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values - other.values)
        return Field2D(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, Field2D):
            self._check(other)
            return Field2D(self.grid, self.values * other.values)
        return Field2D(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Field2D(self.grid, -self.values)

    def __repr__(self):
        return f"Field2D({self.grid.nx}x{self.grid.ny}, min={self.values.min():.3g}, max={self.values.max():.3g})"


@dataclass(frozen=True)
class BoundaryMask:
    """Boolean mask that is true exactly on the edge nodes of a grid."""

    grid: Grid2D

    @property
    def flags(self) -> np.ndarray:
        return _boundary_flags(self.grid)


@lru_cache(maxsize=32)
def _boundary_flags(grid: Grid2D) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    m.setflags(write=False)
    return m


@lru_cache(maxsize=32)
def node_weights(grid: Grid2D) -> np.ndarray:
    """Tensor-product trapezoidal quadrature weights, shape (ny, nx)."""
    wx = np.full(grid.nx, grid.hx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.hy)
    wy[[0, -1]] *= 0.5
    w = np.outer(wy, wx)
    w.setflags(write=False)
    return w


def integrate(a: Field2D) -> float:
    """Trapezoidal approximation of the integral of ``a`` over the domain."""
    return float(np.sum(node_weights(a.grid) * a.values))


def inner(a: Field2D, b: Field2D) -> float:
    """L2 pairing integrate(a*b); symmetric and bilinear."""
    a._check(b)
    return float(np.sum(node_weights(a.grid) * a.values * b.values))


def norm_l1(a: Field2D) -> float:
    return float(np.sum(node_weights(a.grid) * np.abs(a.values)))


class ZeroDenominator(ZeroDivisionError):
    """Relative error against a field with zero L1 norm."""


def rel_l1_error(a: Field2D, truth: Field2D) -> float:
    """Relative L1 error |a - truth|_1 / |truth|_1."""
    a._check(truth)
    denom = norm_l1(truth)
    if denom == 0.0:
        raise ZeroDenominator("reference field has zero L1 norm")
    return norm_l1(a - truth) / denom


def gradient(a: Field2D) -> tuple[Field2D, Field2D]:
    """Node-centered (d/dx, d/dy): central differences inside, second-order
    one-sided stencils on the edges.  Exact for affine fields."""
    g = a.grid
    v = a.values
    dx = np.empty_like(v)
    dx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * g.hx)
    dx[:, 0] = (-3 * v[:, 0] + 4 * v[:, 1] - v[:, 2]) / (2 * g.hx)
    dx[:, -1] = (3 * v[:, -1] - 4 * v[:, -2] + v[:, -3]) / (2 * g.hx)
    dy = np.empty_like(v)
    dy[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * g.hy)
    dy[0, :] = (-3 * v[0, :] + 4 * v[1, :] - v[2, :]) / (2 * g.hy)
    dy[-1, :] = (3 * v[-1, :] - 4 * v[-2, :] + v[-3, :]) / (2 * g.hy)
    return Field2D(g, dx), Field2D(g, dy)


# -- face (staggered) calculus ------------------------------------------------

def face_gradients(a: Field2D) -> tuple[np.ndarray, np.ndarray]:
    """Divided differences at cell-face midpoints.

    Returns ``(gx, gy)`` with ``gx[j,i] = (v[j,i+1]-v[j,i])/hx`` of shape
    (ny, nx-1) and ``gy[j,i] = (v[j+1,i]-v[j,i])/hy`` of shape (ny-1, nx).
    """
    g = a.grid
    v = a.values
    gx = (v[:, 1:] - v[:, :-1]) / g.hx
    gy = (v[1:, :] - v[:-1, :]) / g.hy
    return gx, gy


def face_average(a: Field2D) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic means of node values at x-faces and y-faces."""
    v = a.values
    ax = 0.5 * (v[:, 1:] + v[:, :-1])
    ay = 0.5 * (v[1:, :] + v[:-1, :])
    return ax, ay


def face_average_harmonic(a: Field2D) -> tuple[np.ndarray, np.ndarray]:
    """Harmonic means at faces (for strongly discontinuous coefficients)."""
    v = a.values
    with np.errstate(divide="ignore", invalid="ignore"):
        ax = np.where(v[:, 1:] + v[:, :-1] != 0.0,
                      2.0 * v[:, 1:] * v[:, :-1] / (v[:, 1:] + v[:, :-1]), 0.0)
        ay = np.where(v[1:, :] + v[:-1, :] != 0.0,
                      2.0 * v[1:, :] * v[:-1, :] / (v[1:, :] + v[:-1, :]), 0.0)
    return ax, ay


@lru_cache(maxsize=32)
def face_weights(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature weights for face-midpoint integrands.

    Midpoint rule along the face normal, trapezoid transverse, so each weight
    is hx*hy except on the first/last transverse row/column where it is halved.
    """
    wx = np.full((grid.ny, grid.nx - 1), grid.hx * grid.hy)
    wx[0, :] *= 0.5
    wx[-1, :] *= 0.5
    wy = np.full((grid.ny - 1, grid.nx), grid.hx * grid.hy)
    wy[:, 0] *= 0.5
    wy[:, -1] *= 0.5
    wx.setflags(write=False)
    wy.setflags(write=False)
    return wx, wy


def grad_inner(a: Field2D, b: Field2D, weight: Field2D | None = None,
               harmonic: bool = False) -> float:
    """Weighted Dirichlet product  integral of w * grad(a).grad(b).

    Gradients are face-midpoint divided differences and ``weight`` (default 1)
    is face-averaged exactly as in the flux stencil, so for zero-boundary ``b``
    this equals the node pairing <L_w a, b> to solver precision.
    """
    a._check(b)
    if weight is not None:
        a._check(weight)
    gax, gay = face_gradients(a)
    gbx, gby = face_gradients(b)
    wx, wy = face_weights(a.grid)
    if weight is not None:
        pfx, pfy = (face_average_harmonic(weight) if harmonic else face_average(weight))
        return float(np.sum(wx * pfx * gax * gbx) + np.sum(wy * pfy * gay * gby))
    return float(np.sum(wx * gax * gbx) + np.sum(wy * gay * gby))


def h1_seminorm_sq(a: Field2D) -> float:
    """Squared discrete H1 seminorm |grad a|^2 integrated over the domain."""
    return grad_inner(a, a)


# -- boundary bookkeeping ------------------------------------------------------

def boundary_restrict(a: Field2D) -> np.ndarray:
    """Values at boundary nodes, in row-major scan order of the grid."""
    return a.values[_boundary_flags(a.grid)].copy()


def boundary_overwrite(a: Field2D, src: Field2D) -> Field2D:
    """Copy of ``a`` whose boundary nodes are taken from ``src``."""
    a._check(src)
    out = a.values.copy()
    flags = _boundary_flags(a.grid)
    out[flags] = src.values[flags]
    return Field2D(a.grid, out)


def set_boundary(a: Field2D, boundary_values: np.ndarray) -> Field2D:
    """Copy of ``a`` with boundary nodes replaced by a flat boundary vector
    (row-major scan order, as produced by :func:`boundary_restrict`)."""
    flags = _boundary_flags(a.grid)
    vec = np.asarray(boundary_values, dtype=float)
    if vec.shape != (int(flags.sum()),):
        raise ValueError(f"expected {int(flags.sum())} boundary values, got {vec.shape}")
    out = a.values.copy()
    out[flags] = vec
    return Field2D(a.grid, out)


# -- serialization -------------------------------------------------------------

def field_to_csv(a: Field2D) -> str:
    """One CSV row per grid row (constant y), x varying across columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in a.values:
        writer.writerow([format(x, ".17g") for x in row])
    return buf.getvalue()


def field_from_csv(grid: Grid2D, text: str) -> Field2D:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    values = np.array([[float(x) for x in r] for r in rows])
    return Field2D(grid, values)


def field_to_json(a: Field2D) -> str:
    g = a.grid
    return json.dumps(
        {"x0": g.x0, "x1": g.x1, "y0": g.y0, "y1": g.y1,
         "nx": g.nx, "ny": g.ny, "values": a.flat().tolist()}
    )


def field_from_json(text: str) -> Field2D:
    d = json.loads(text)
    grid = Grid2D(d["x0"], d["x1"], d["y0"], d["y1"], d["nx"], d["ny"])
    return Field2D(grid, np.asarray(d["values"], dtype=float))
