"""From raw measurements to inverse-problem inputs.

The inverse solver consumes an :class:`ObservationSet`: the interior
snapshot ``p_1..p_3`` of the three populations at ``t = T/2``, the
Dirichlet traces ``f_1..f_3`` on the observable boundary ``x = b``, the
prescribed Neumann fluxes ``g_1..g_3`` on the whole lateral boundary,
first and second time derivatives of ``f`` and ``g`` packed as the
six-component Cauchy vectors ``F`` (on ``x = b``) and ``G`` (all sides),
and the four coefficient fields

    r1 = -1/(p1*p2)
    r2 = -r1 * (c*Lap(p1) - div(p1 q_S))
    r3 = 1/p2
    r4 = -r3 * (c*Lap(p3) - div(p3 q_R))

through which the unknown rates are expressed algebraically in the
transformed system.

Noise is multiplicative with independent uniform[-1, 1] draws per node,
scaled by the level ``sigma`` on both the snapshot and the trace channel
(fluxes stay clean), and is deterministic under a fixed seed.  Derivatives
of (possibly noisy) data are taken from natural cubic splines: time
derivatives along each trace line, spatial derivatives from tensorized
1-D splines along grid lines.

The transform divides by ``p1*p2``.  The measured floor
``kappa = min(|p1|, |p2|)`` is recorded; when it falls below
``kappa_floor`` the build either aborts (default) or clamps the
denominators at the floor, which bounds the r fields at the price of
washing out the coefficients wherever the infected population is too
small to carry information.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import KappaError
from .grid import Grid

Array = np.ndarray

SIDES = ("xlow", "xhigh", "ylow", "yhigh")


@dataclass(frozen=True)
class RawObservations:
    """Measurements restricted to the observation grid, before processing.

    p has shape (3, Ny+1, Nx+1), f has shape (3, Nt+1, Ny+1), and g maps
    each side to an array of shape (3, Nt+1, n_side).
    """

    grid: Grid
    p: Array
    f: Array
    g: dict[str, Array]


@dataclass(frozen=True)
class NoiseSpec:
    """Relative noise level and generator seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.sigma <= 0.2:
            raise ValueError(f"sigma must lie in [0, 0.2], got {self.sigma}")


def add_noise(raw: RawObservations, spec: NoiseSpec) -> RawObservations:
    """Multiplicative uniform noise on the p and f channels.

    sigma = 0 returns the input unchanged (bit-identical).  Draw order is
    fixed (p1, p2, p3, f1, f2, f3) so outputs are reproducible from the
    seed alone.
    """
    if spec.sigma == 0.0:
        return raw
    rng = np.random.default_rng(spec.seed)
    p = np.empty_like(raw.p)
    for i in range(3):
        p[i] = raw.p[i] * (1.0 + spec.sigma * rng.uniform(-1.0, 1.0, raw.p[i].shape))
    f = np.empty_like(raw.f)
    for i in range(3):
        f[i] = raw.f[i] * (1.0 + spec.sigma * rng.uniform(-1.0, 1.0, raw.f[i].shape))
    return RawObservations(grid=raw.grid, p=p, f=f, g=raw.g)


def _natural_spline_derivs(x: Array, y: Array, axis: int) -> tuple[Array, Array]:
    moved = np.moveaxis(y, axis, 0)
    if len(x) < 4:
        raise ValueError(f"need at least 4 samples for spline smoothing, got {len(x)}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("sample abscissae must be strictly increasing")
    spline = CubicSpline(x, moved, axis=0, bc_type="natural")
    d1 = np.moveaxis(spline(x, 1), 0, axis)
    d2 = np.moveaxis(spline(x, 2), 0, axis)
    return d1, d2


def spline_time_derivatives(grid: Grid, series: Array, axis: int = 0) -> tuple[Array, Array]:
    """First and second time derivatives of samples on the grid's t nodes.

    Both come from the same natural cubic spline, so the second output is
    exactly the derivative of the first one's spline.
    """
    series = np.asarray(series, dtype=float)
    if series.shape[axis] != grid.Nt + 1:
        raise ValueError(
            f"axis {axis} has length {series.shape[axis]}, expected {grid.Nt + 1}"
        )
    return _natural_spline_derivs(grid.t, series, axis)


def spline_spatial_gradient(grid: Grid, p: Array) -> tuple[Array, Array]:
    """(d/dx, d/dy) from 1-D natural splines along grid lines."""
    p = np.asarray(p, dtype=float)
    dx, _ = _natural_spline_derivs(grid.x, p, axis=-1)
    dy, _ = _natural_spline_derivs(grid.y, p, axis=-2)
    return dx, dy


def spline_spatial_laplacian(grid: Grid, p: Array) -> Array:
    """Laplacian as the sum of second spline derivatives along x and y lines."""
    p = np.asarray(p, dtype=float)
    _, dxx = _natural_spline_derivs(grid.x, p, axis=-1)
    _, dyy = _natural_spline_derivs(grid.y, p, axis=-2)
    return dxx + dyy


def _spline_div_product(grid: Grid, p: Array, q: tuple[Array, Array]) -> Array:
    qx, qy = q
    d1, _ = _natural_spline_derivs(grid.x, p * qx, axis=-1)
    d2, _ = _natural_spline_derivs(grid.y, p * qy, axis=-2)
    return d1 + d2


def _clamped(p: Array, floor: float) -> Array:
    """Push |p| up to the floor, keeping sign; exact zeros go to +floor."""
    return np.where(p >= 0, np.maximum(p, floor), np.minimum(p, -floor))


def build_r_coefficients(
    grid: Grid,
    p1: Array,
    p2: Array,
    p3: Array,
    q_s: tuple[Array, Array],
    q_r: tuple[Array, Array],
    c: float,
    kappa_floor: float = 1e-3,
    on_low_kappa: str = "abort",
) -> tuple[Array, Array, Array, Array, float]:
    """The four coefficient fields of the transform, plus the measured kappa.

    Raises KappaError naming the offending node when the snapshot floor is
    below ``kappa_floor`` and ``on_low_kappa == "abort"``; with ``"clamp"``
    the denominators are floored instead and the (pre-clamp) measured
    kappa is still returned.
    """
    if on_low_kappa not in ("abort", "clamp"):
        raise ValueError(f"on_low_kappa must be 'abort' or 'clamp', got {on_low_kappa!r}")
    absmin = np.minimum(np.abs(p1), np.abs(p2))
    flat = int(np.argmin(absmin))
    node = np.unravel_index(flat, absmin.shape)
    kappa = float(absmin[node])
    if kappa < kappa_floor:
        if on_low_kappa == "abort":
            raise KappaError(
                f"snapshot floor min(|p1|,|p2|) = {kappa:.3e} < {kappa_floor:.3e} "
                f"at node (j={node[0]}, i={node[1]}) "
                f"(x={grid.x[node[1]]:.4g}, y={grid.y[node[0]]:.4g}); "
                "the coefficient transform would be unbounded there",
                kappa=kappa,
                node=(int(node[0]), int(node[1])),
            )
        d1 = _clamped(p1, kappa_floor)
        d2 = _clamped(p2, kappa_floor)
    else:
        d1, d2 = p1, p2

    r1 = -1.0 / (d1 * d2)
    r2 = -r1 * (c * spline_spatial_laplacian(grid, p1) - _spline_div_product(grid, p1, q_s))
    r3 = 1.0 / d2
    r4 = -r3 * (c * spline_spatial_laplacian(grid, p3) - _spline_div_product(grid, p3, q_r))
    return r1, r2, r3, r4, kappa


@dataclass(frozen=True)
class ObservationSet:
    """Complete inverse-problem input bundle on the observation grid.

    Carries the (possibly noisy) measurements, their spline time
    derivatives, the packed Cauchy vectors F (6, Nt+1, Ny+1) and
    G (per side, 6, Nt+1, n_side), the r coefficient fields, the known
    model data (velocities, viscosity), and provenance scalars.
    """

    grid: Grid
    p: Array
    f: Array
    g: dict[str, Array]
    dt_f: Array
    dtt_f: Array
    dt_g: dict[str, Array]
    dtt_g: dict[str, Array]
    F: Array
    G: dict[str, Array]
    r1: Array
    r2: Array
    r3: Array
    r4: Array
    kappa: float
    kappa_floor: float
    clamped: bool
    sigma: float
    seed: int
    q_s: tuple[Array, Array]
    q_i: tuple[Array, Array]
    q_r: tuple[Array, Array]
    c: float

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise ValueError(
                f"snapshot floor must be positive, got kappa={self.kappa}"
            )

    @property
    def p1(self) -> Array:
        return self.p[0]

    @property
    def p2(self) -> Array:
        return self.p[1]

    @property
    def p3(self) -> Array:
        return self.p[2]


def build_cauchy_vectors(
    grid: Grid, f: Array, g: dict[str, Array]
) -> tuple[Array, Array, dict[str, Array], dict[str, Array], Array, dict[str, Array]]:
    """Spline time derivatives of traces and fluxes, packed in system order.

    Returns (dt_f, dtt_f, dt_g, dtt_g, F, G) with F stacking the three
    first derivatives of f over the three second derivatives, and G doing
    the same per boundary side.  Zero fluxes give exactly zero G.
    """
    dt_f, dtt_f = spline_time_derivatives(grid, f, axis=1)
    F = np.concatenate([dt_f, dtt_f], axis=0)
    dt_g: dict[str, Array] = {}
    dtt_g: dict[str, Array] = {}
    G: dict[str, Array] = {}
    for side in SIDES:
        arr = g[side]
        if np.any(arr):
            d1, d2 = spline_time_derivatives(grid, arr, axis=1)
        else:
            d1 = np.zeros_like(arr)
            d2 = np.zeros_like(arr)
        dt_g[side] = d1
        dtt_g[side] = d2
        G[side] = np.concatenate([d1, d2], axis=0)
    return dt_f, dtt_f, dt_g, dtt_g, F, G


def build_observation_set(
    raw: RawObservations,
    q_s: tuple[Array, Array],
    q_i: tuple[Array, Array],
    q_r: tuple[Array, Array],
    c: float,
    noise: NoiseSpec | None = None,
    kappa_floor: float = 1e-3,
    on_low_kappa: str = "abort",
) -> ObservationSet:
    """Run the full observation pipeline: noise, splines, r fields, packing."""
    grid = raw.grid
    sigma = 0.0
    seed = 0
    noisy = raw
    if noise is not None:
        noisy = add_noise(raw, noise)
        sigma = noise.sigma
        seed = noise.seed

    r1, r2, r3, r4, kappa = build_r_coefficients(
        grid, noisy.p[0], noisy.p[1], noisy.p[2], q_s, q_r, c,
        kappa_floor=kappa_floor, on_low_kappa=on_low_kappa,
    )
    dt_f, dtt_f, dt_g, dtt_g, F, G = build_cauchy_vectors(grid, noisy.f, noisy.g)
    return ObservationSet(
        grid=grid,
        p=noisy.p,
        f=noisy.f,
        g=noisy.g,
        dt_f=dt_f,
        dtt_f=dtt_f,
        dt_g=dt_g,
        dtt_g=dtt_g,
        F=F,
        G=G,
        r1=r1,
        r2=r2,
        r3=r3,
        r4=r4,
        kappa=kappa,
        kappa_floor=kappa_floor,
        clamped=bool(kappa < kappa_floor),
        sigma=sigma,
        seed=seed,
        q_s=tuple(np.asarray(a, dtype=float) for a in q_s),
        q_i=tuple(np.asarray(a, dtype=float) for a in q_i),
        q_r=tuple(np.asarray(a, dtype=float) for a in q_r),
        c=float(c),
    )


def with_sigma_zero_passthrough(obs: ObservationSet) -> ObservationSet:
    """Clone with sigma forced to zero in metadata (clean-data marker)."""
    return replace(obs, sigma=0.0)
