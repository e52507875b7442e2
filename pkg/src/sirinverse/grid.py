"""Space-time mesh over a rectangle, finite-difference stencils, quadrature.

The computational domain is the box ``(a, b) x (-A, A)`` in space and
``(0, T)`` in time.  Every field in the package lives on the tensor-product
node grid

    x_i = a + i*hx   (i = 0..Nx)
    y_j = -A + j*hy  (j = 0..Ny)
    t_k = k*ht       (k = 0..Nt)

stored time-major: a space-time array has shape ``(Nt+1, Ny+1, Nx+1)`` in
C order, so the flattened node index runs ``(k, j, i)`` row-major.  ``Nt``
must be even so the interior-snapshot time ``T/2`` is the grid node
``k = Nt//2``.

Stencils are second-order central at interior nodes.  At spatial boundary
nodes, first derivatives use the same one-sided three-point family as the
affine boundary constraints of the inverse solve (low side
``(u0 - 4u1 + 3u2)/2h``, high side ``(3un - 4un-1 + un-2)/2h``), so the
derivative a constrained field reports at the boundary equals the value the
constraint encodes.  The low-side variant is only first-order accurate at
the boundary node itself; exactness holds on affine data, which is the
contract the divergence operator needs.  Second derivatives use the
ghost-free shifted three-point second difference, exact on quadratics.
Time derivatives use standard second-order one-sided stencils at k=0, Nt.

Integrals use tensor-product trapezoid weights; the Volterra integral is
the trapezoid cumulative integral anchored at the snapshot node, where it
vanishes identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

Array = np.ndarray


def _values(u) -> Array:
    """Accept a bare ndarray or a field wrapper with a .values attribute."""
    return u.values if hasattr(u, "values") else np.asarray(u, dtype=float)


@dataclass(frozen=True)
class Grid:
    """Rectangular space-time mesh with derived spacings.

    Parameters
    ----------
    a, b : float
        x extent, ``a < b``.
    A : float
        Half-width in y; the y extent is ``(-A, A)``.
    T : float
        Final time.
    Nx, Ny : int
        Interior cell counts per spatial axis, at least 4.
    Nt : int
        Time cell count, at least 2 and even (the snapshot time ``T/2``
        must be a grid node).
    """

    a: float
    b: float
    A: float
    T: float
    Nx: int
    Ny: int
    Nt: int
    hx: float = field(init=False, repr=False)
    hy: float = field(init=False, repr=False)
    ht: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.A <= 0:
            raise ValueError(f"need A > 0, got A={self.A}")
        if self.T <= 0:
            raise ValueError(f"need T > 0, got T={self.T}")
        if self.Nx < 4 or self.Ny < 4:
            raise ValueError(f"need Nx, Ny >= 4, got Nx={self.Nx}, Ny={self.Ny}")
        if self.Nt < 2:
            raise ValueError(f"need Nt >= 2, got Nt={self.Nt}")
        if self.Nt % 2 != 0:
            raise ValueError(
                f"Nt must be even so the snapshot time T/2 is a node, got Nt={self.Nt}"
            )
        object.__setattr__(self, "hx", (self.b - self.a) / self.Nx)
        object.__setattr__(self, "hy", 2.0 * self.A / self.Ny)
        object.__setattr__(self, "ht", self.T / self.Nt)

    @property
    def x(self) -> Array:
        return self.a + self.hx * np.arange(self.Nx + 1)

    @property
    def y(self) -> Array:
        return -self.A + self.hy * np.arange(self.Ny + 1)

    @property
    def t(self) -> Array:
        return self.ht * np.arange(self.Nt + 1)

    @property
    def snapshot_index(self) -> int:
        return self.Nt // 2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nt + 1, self.Ny + 1, self.Nx + 1)

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.Ny + 1, self.Nx + 1)

    @property
    def n_nodes(self) -> int:
        return (self.Nt + 1) * (self.Ny + 1) * (self.Nx + 1)

    @property
    def n_spatial(self) -> int:
        return (self.Ny + 1) * (self.Nx + 1)

    def meshgrid(self):
        """Spatial coordinate matrices X, Y of shape (Ny+1, Nx+1)."""
        return np.meshgrid(self.x, self.y)

    def nests_in(self, fine: "Grid") -> bool:
        """True when this grid is an exact nodal subsampling of `fine`."""
        extents_match = (
            self.a == fine.a and self.b == fine.b
            and self.A == fine.A and self.T == fine.T
        )
        return (
            extents_match
            and fine.Nx % self.Nx == 0
            and fine.Ny % self.Ny == 0
            and fine.Nt % self.Nt == 0
        )


def build_grid(a: float, b: float, A: float, T: float,
               Nx: int, Ny: int, Nt: int) -> Grid:
    """Construct a validated Grid (thin functional front for Grid(...))."""
    return Grid(a=a, b=b, A=A, T=T, Nx=Nx, Ny=Ny, Nt=Nt)


@dataclass(frozen=True)
class ScalarField:
    """One value per space-time node, shape (Nt+1, Ny+1, Nx+1)."""

    grid: Grid
    values: Array

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if v.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def snapshot(self) -> "SpatialField":
        """Slice at the snapshot node t = T/2."""
        return SpatialField(self.grid, self.values[self.grid.snapshot_index])


@dataclass(frozen=True)
class SpatialField:
    """One value per spatial node, shape (Ny+1, Nx+1)."""

    grid: Grid
    values: Array

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if v.shape != self.grid.spatial_shape:
            raise ValueError(
                f"expected shape {self.grid.spatial_shape}, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# 1-D stencil matrices.  All operators used by the residual and the
# functional are applications of these along one axis, which makes exact
# adjoints available as plain transposes.
# ---------------------------------------------------------------------------

def trapezoid_vector(n: int, h: float) -> Array:
    """Composite-trapezoid weights on n+1 equispaced nodes."""
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@lru_cache(maxsize=None)
def deriv1_matrix(n: int, h: float) -> Array:
    """First derivative on n+1 nodes, constraint-consistent boundary rows.

    Interior rows are central differences.  The low-side row is the flipped
    one-sided stencil (u0 - 4u1 + 3u2)/2h (exact on affine data only); the
    high-side row is the standard backward stencil.
    """
    if n < 2:
        raise ValueError("need at least 3 nodes for a derivative stencil")
    D = np.zeros((n + 1, n + 1))
    for i in range(1, n):
        D[i, i - 1] = -1.0
        D[i, i + 1] = 1.0
    D[0, 0], D[0, 1], D[0, 2] = 1.0, -4.0, 3.0
    D[n, n], D[n, n - 1], D[n, n - 2] = 3.0, -4.0, 1.0
    D /= 2.0 * h
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def deriv2_matrix(n: int, h: float) -> Array:
    """Second derivative on n+1 nodes, shifted three-point rows at the ends."""
    if n < 2:
        raise ValueError("need at least 3 nodes for a second-difference stencil")
    D = np.zeros((n + 1, n + 1))
    for i in range(1, n):
        D[i, i - 1], D[i, i], D[i, i + 1] = 1.0, -2.0, 1.0
    D[0, 0], D[0, 1], D[0, 2] = 1.0, -2.0, 1.0
    D[n, n], D[n, n - 1], D[n, n - 2] = 1.0, -2.0, 1.0
    D /= h * h
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def timederiv_matrix(nt: int, ht: float) -> Array:
    """Time derivative on nt+1 nodes, standard one-sided rows at k=0, nt."""
    if nt < 2:
        raise ValueError("need at least 3 time levels")
    D = np.zeros((nt + 1, nt + 1))
    for k in range(1, nt):
        D[k, k - 1] = -1.0
        D[k, k + 1] = 1.0
    D[0, 0], D[0, 1], D[0, 2] = -3.0, 4.0, -1.0
    D[nt, nt], D[nt, nt - 1], D[nt, nt - 2] = 3.0, -4.0, 1.0
    D /= 2.0 * ht
    D.setflags(write=False)
    return D


@lru_cache(maxsize=None)
def volterra_matrix(nt: int, ht: float, k0: int) -> Array:
    """Trapezoid cumulative integral from node k0: (Vu)_k = int_{t_k0}^{t_k} u.

    Row k0 is identically zero; rows below k0 carry the negated weights of
    the reversed segment sums.
    """
    if not 0 <= k0 <= nt:
        raise ValueError(f"anchor index {k0} outside 0..{nt}")
    # C[k] = trapezoid integral from node 0 to node k, as a weight matrix.
    C = np.zeros((nt + 1, nt + 1))
    for k in range(1, nt + 1):
        C[k, :k] += 0.5 * ht
        C[k, 1:k + 1] += 0.5 * ht
    V = C - C[k0]
    V.setflags(write=False)
    return V


def apply_axis(M: Array, u: Array, axis: int) -> Array:
    """Apply a 1-D operator matrix along one axis of an nd array."""
    moved = np.moveaxis(u, axis, -1)
    return np.moveaxis(moved @ M.T, -1, axis)


# ---------------------------------------------------------------------------
# Stencil operations on fields.  They accept bare arrays shaped like
# (..., Ny+1, Nx+1), with a (..., Nt+1, Ny+1, Nx+1) layout for anything
# carrying a time axis, or the field wrappers above.
# ---------------------------------------------------------------------------

def laplacian(grid: Grid, u) -> Array:
    """Five-point Laplacian; shifted one-sided second differences on edges."""
    v = _values(u)
    Dxx = deriv2_matrix(grid.Nx, grid.hx)
    Dyy = deriv2_matrix(grid.Ny, grid.hy)
    return apply_axis(Dxx, v, -1) + apply_axis(Dyy, v, -2)


def divergence_of_product(grid: Grid, u, qx, qy) -> Array:
    """d/dx(u*qx) + d/dy(u*qy) with constraint-consistent boundary rows."""
    v = _values(u)
    Dx = deriv1_matrix(grid.Nx, grid.hx)
    Dy = deriv1_matrix(grid.Ny, grid.hy)
    return apply_axis(Dx, v * _values(qx), -1) + apply_axis(Dy, v * _values(qy), -2)


def time_derivative(grid: Grid, u) -> Array:
    v = _values(u)
    return apply_axis(timederiv_matrix(grid.Nt, grid.ht), v, -3)


def volterra_integral(grid: Grid, u) -> Array:
    """Trapezoid integral from the snapshot time T/2 to each node time."""
    v = _values(u)
    V = volterra_matrix(grid.Nt, grid.ht, grid.snapshot_index)
    return apply_axis(V, v, -3)


def quadrature_weights(grid: Grid) -> Array:
    """Tensor-product trapezoid weights over all space-time nodes."""
    wt = trapezoid_vector(grid.Nt, grid.ht)
    wy = trapezoid_vector(grid.Ny, grid.hy)
    wx = trapezoid_vector(grid.Nx, grid.hx)
    return wt[:, None, None] * wy[None, :, None] * wx[None, None, :]


def spatial_quadrature_weights(grid: Grid) -> Array:
    """Trapezoid weights over the spatial nodes only."""
    wy = trapezoid_vector(grid.Ny, grid.hy)
    wx = trapezoid_vector(grid.Nx, grid.hx)
    return wy[:, None] * wx[None, :]
