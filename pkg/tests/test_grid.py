import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirinverse.grid import (
    Grid,
    build_grid,
    divergence_of_product,
    laplacian,
    quadrature_weights,
    spatial_quadrature_weights,
    time_derivative,
    trapezoid_vector,
    volterra_integral,
)


def test_build_grid_paper_mesh():
    g = build_grid(0.1, 1.1, 0.5, 1.0, 20, 20, 10)
    assert g.hx == pytest.approx(0.05)
    assert g.hy == pytest.approx(0.05)
    assert g.ht == pytest.approx(0.1)
    assert g.snapshot_index == 5


def test_build_grid_direct_arithmetic():
    g = build_grid(0.0, 1.0, 0.5, 1.0, 4, 4, 2)
    assert g.hx == 0.25
    assert g.hy == 0.25
    assert g.ht == 0.5


def test_build_grid_rejects_odd_nt():
    with pytest.raises(ValueError, match="even"):
        build_grid(0.1, 1.1, 0.5, 1.0, 20, 20, 9)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(a=1.0, b=0.5),
        dict(A=0.0),
        dict(T=-1.0),
        dict(Nx=3),
        dict(Ny=2),
        dict(Nt=0),
    ],
)
def test_build_grid_rejects_bad_extents(kwargs):
    base = dict(a=0.0, b=1.0, A=0.5, T=1.0, Nx=6, Ny=6, Nt=4)
    base.update(kwargs)
    with pytest.raises(ValueError):
        Grid(**base)


def test_node_coordinates_reproducible():
    g = build_grid(0.1, 1.1, 0.5, 1.0, 20, 20, 10)
    assert np.array_equal(g.x, 0.1 + g.hx * np.arange(21))
    assert np.array_equal(g.y, -0.5 + g.hy * np.arange(21))
    assert np.array_equal(g.t, g.ht * np.arange(11))


@pytest.fixture
def grid():
    return build_grid(0.1, 1.1, 0.5, 1.0, 12, 10, 6)


def test_laplacian_quadratic_exact_everywhere(grid):
    X, Y = grid.meshgrid()
    f = X**2 + Y**2
    lap = laplacian(grid, f)
    # second differences of quadratics are exact, including the shifted
    # boundary rows
    assert np.allclose(lap, 4.0, atol=1e-11)


def test_laplacian_constant_zero(grid):
    f = np.full(grid.spatial_shape, 3.7)
    assert np.allclose(laplacian(grid, f), 0.0, atol=1e-13)


def test_laplacian_refinement_ratio():
    errs = []
    for nx in (10, 20):
        g = build_grid(0.0, 1.0, 0.5, 1.0, nx, 4, 2)
        X, _ = g.meshgrid()
        f = np.sin(np.pi * X)
        lap = laplacian(g, f)
        interior = lap[1:-1, 1:-1] + np.pi**2 * np.sin(np.pi * X[1:-1, 1:-1])
        errs.append(np.max(np.abs(interior)))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_divergence_constant_field_zero(grid):
    q = np.full(grid.spatial_shape, 0.2)
    f = np.full(grid.spatial_shape, 1.3)
    assert np.allclose(divergence_of_product(grid, f, q, q), 0.0, atol=1e-13)


def test_divergence_linear_exact_interior(grid):
    X, _ = grid.meshgrid()
    q = np.full(grid.spatial_shape, 0.2)
    div = divergence_of_product(grid, X, q, q)
    assert np.allclose(div[1:-1, 1:-1], 0.2, atol=1e-12)


def test_divergence_affine_exact_everywhere(grid):
    # boundary rows are exact on affine integrands (one-sided stencils of
    # the constraint family are first order, hence affine-exact)
    X, Y = grid.meshgrid()
    f = 2.0 * X - Y + 0.5
    qx = np.full(grid.spatial_shape, 0.3)
    qy = np.full(grid.spatial_shape, -0.1)
    div = divergence_of_product(grid, f, qx, qy)
    assert np.allclose(div, 0.3 * 2.0 + (-0.1) * (-1.0), atol=1e-12)


def test_divergence_free_rotation(grid):
    X, Y = grid.meshgrid()
    f = np.ones(grid.spatial_shape)
    div = divergence_of_product(grid, f, Y, -X)
    assert np.allclose(div, 0.0, atol=1e-12)


def test_time_derivative_linear_exact(grid):
    t = grid.t[:, None, None]
    f = np.broadcast_to(t, grid.shape)
    assert np.allclose(time_derivative(grid, f), 1.0, atol=1e-12)


def test_time_derivative_quadratic_exact(grid):
    t = grid.t[:, None, None]
    f = np.broadcast_to(t**2, grid.shape)
    want = np.broadcast_to(2 * t, grid.shape)
    # one-sided rows at k=0, Nt are second order, exact on quadratics too
    assert np.allclose(time_derivative(grid, f), want, atol=1e-11)


def test_time_derivative_refinement_ratio():
    errs = []
    for nt in (10, 20):
        g = build_grid(0.0, 1.0, 0.5, 1.0, 4, 4, nt)
        t = g.t[:, None, None]
        f = np.broadcast_to(np.exp(t), g.shape)
        err = time_derivative(g, f) - f
        errs.append(np.max(np.abs(err)))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_volterra_constant(grid):
    f = np.ones(grid.shape)
    got = volterra_integral(grid, f)
    want = np.broadcast_to((grid.t - grid.T / 2)[:, None, None], grid.shape)
    assert np.allclose(got, want, atol=1e-14)
    assert np.all(got[grid.snapshot_index] == 0.0)


def test_volterra_zero(grid):
    assert np.all(volterra_integral(grid, np.zeros(grid.shape)) == 0.0)


def test_volterra_linear_integrand_exact(grid):
    t = grid.t[:, None, None]
    f = np.broadcast_to(t, grid.shape)
    want = (t**2 - 0.25) / 2.0
    assert np.allclose(volterra_integral(grid, f), want, atol=1e-14)


def test_volterra_then_time_derivative_recovers_constant(grid):
    rng = np.random.default_rng(0)
    const = rng.normal(size=grid.spatial_shape)
    f = np.broadcast_to(const, grid.shape)
    got = time_derivative(grid, volterra_integral(grid, f))
    assert np.allclose(got, f, atol=1e-12)


def test_quadrature_total_measure(grid):
    w = quadrature_weights(grid)
    measure = (grid.b - grid.a) * 2 * grid.A * grid.T
    assert abs(w.sum() - measure) <= 1e-12 * measure
    assert np.all(w > 0)


def test_quadrature_corner_weight():
    g = build_grid(0.0, 1.0, 0.5, 1.0, 4, 4, 2)
    w = quadrature_weights(g)
    assert w[0, 0, 0] == pytest.approx(g.hx * g.hy * g.ht / 8.0)


def test_quadrature_exact_on_linear(grid):
    w = quadrature_weights(grid)
    X, _ = grid.meshgrid()
    integral = (w * X[None]).sum()
    want = grid.T * 2 * grid.A * (grid.b**2 - grid.a**2) / 2.0
    assert abs(integral - want) <= 1e-12 * abs(want)


def test_spatial_quadrature(grid):
    w = spatial_quadrature_weights(grid)
    measure = (grid.b - grid.a) * 2 * grid.A
    assert abs(w.sum() - measure) <= 1e-12 * measure


@given(
    nx=st.integers(min_value=4, max_value=9),
    c=st.floats(min_value=-5, max_value=5, allow_nan=False),
)
@settings(max_examples=25, deadline=None)
def test_trapezoid_vector_sums_to_span(nx, c):
    h = 0.37
    w = trapezoid_vector(nx, h)
    assert w.sum() == pytest.approx(nx * h)
    assert np.dot(w, np.full(nx + 1, c)) == pytest.approx(c * nx * h)


def test_scalarfield_validation(grid):
    from sirinverse.grid import ScalarField

    with pytest.raises(ValueError, match="shape"):
        ScalarField(grid, np.zeros((2, 2, 2)))
    bad = np.zeros(grid.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ScalarField(grid, bad)


def test_spatialfield_snapshot_roundtrip(grid):
    from sirinverse.grid import ScalarField

    vals = np.random.default_rng(1).normal(size=grid.shape)
    f = ScalarField(grid, vals)
    assert np.array_equal(f.snapshot().values, vals[grid.snapshot_index])
