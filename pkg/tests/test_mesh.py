import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bfstab.errors import ConfigError
from bfstab.mesh import (
    BoundaryPartition,
    ScalarField,
    build_grid_1d,
    build_grid_2d,
    inner_product_boundary,
    inner_product_domain,
    partition_1d,
    partition_2d,
)


def test_grid_spacing_and_nodes():
    g = build_grid_1d(1.0, 3)
    assert g.h == 0.25
    assert np.allclose(g.nodes, [0.25, 0.5, 0.75])
    assert g.points[0] == 0.0 and g.points[-1] == 1.0
    assert build_grid_1d(np.pi, 99).h == pytest.approx(np.pi / 100)


@pytest.mark.parametrize("L, n", [(0.0, 10), (-1.0, 10), (1.0, 2), (np.inf, 5)])
def test_grid_preconditions(L, n):
    with pytest.raises(ConfigError):
        build_grid_1d(L, n)


def test_refine_halves_spacing():
    g = build_grid_1d(2.0, 9)
    assert g.refine().h == pytest.approx(g.h / 2)
    g2 = build_grid_2d(5, 7)
    assert g2.refine().h == pytest.approx((g2.h[0] / 2, g2.h[1] / 2))


def _conv_ratio(errors):
    e = np.abs(np.asarray(errors))
    return e[:-1] / e[1:]


def test_domain_quadrature_constants_exact():
    for n in (3, 10, 101):
        g = build_grid_1d(1.0, n)
        one = ScalarField.constant(g, 1.0)
        assert inner_product_domain(one, one) == pytest.approx(1.0, abs=1e-14)
    g2 = build_grid_2d(9)
    one = ScalarField.constant(g2, 1.0)
    assert inner_product_domain(one, one) == pytest.approx(np.pi**2, rel=1e-14)


@pytest.mark.parametrize(
    "f, g, exact",
    [
        (lambda x: np.cos(np.pi * x / 2), lambda x: np.cos(3 * np.pi * x / 2), 0.0),
        (lambda x: np.cos(np.pi * x / 2), lambda x: np.cos(np.pi * x / 2), 0.5),
    ],
)
def test_domain_quadrature_examples(f, g, exact):
    for n in (19, 39, 79):
        grid = build_grid_1d(1.0, n)
        val = inner_product_domain(ScalarField.from_function(grid, f), ScalarField.from_function(grid, g))
        assert abs(val - exact) <= grid.h**2


def test_domain_quadrature_second_order():
    errs = []
    for n in (19, 39, 79):
        grid = build_grid_1d(1.0, n)
        e = ScalarField.from_function(grid, np.exp)
        errs.append(inner_product_domain(e, ScalarField.constant(grid, 1.0)) - (np.e - 1))
    assert np.all(np.abs(_conv_ratio(errs) - 4.0) < 0.1)
    errs = []
    for n in (9, 19, 39):
        grid = build_grid_2d(n)
        X1, X2 = grid.points
        f = ScalarField(grid, np.exp(0.3 * X1) * X2)
        errs.append(inner_product_domain(f, ScalarField.constant(grid, 1.0)) - (np.exp(0.3 * np.pi) - 1) / 0.3 * np.pi**2 / 2)
    assert np.all(np.abs(_conv_ratio(errs) - 4.0) < 0.1)


def test_domain_product_rejects_grid_mismatch():
    a = ScalarField.constant(build_grid_1d(1.0, 5), 1.0)
    b = ScalarField.constant(build_grid_1d(1.0, 6), 1.0)
    with pytest.raises(ValueError):
        inner_product_domain(a, b)


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=7, max_size=7),
    st.lists(st.floats(-1e3, 1e3), min_size=7, max_size=7),
    st.lists(st.floats(-1e3, 1e3), min_size=7, max_size=7),
    st.floats(-10, 10),
)
def test_domain_product_symmetric_bilinear(u, v, w, s):
    g = build_grid_1d(1.0, 5)
    U, V, W = (ScalarField(g, np.array(x)) for x in (u, v, w))
    assert inner_product_domain(U, V) == inner_product_domain(V, U)
    lhs = inner_product_domain(ScalarField(g, s * U.values + W.values), V)
    rhs = s * inner_product_domain(U, V) + inner_product_domain(W, V)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


def test_boundary_product_1d_is_pointwise():
    g = build_grid_1d(1.0, 10)
    part = partition_1d(g)
    assert inner_product_boundary([-np.pi / 2], [3 * np.pi / 2], part) == pytest.approx(-3 * np.pi**2 / 4)
    assert inner_product_boundary([0.0], [5.0], part) == 0.0


def test_boundary_product_2d_trapezoid():
    for n in (15, 31, 63):
        g = build_grid_2d(n)
        c = np.cos(g.x1.points)
        assert abs(inner_product_boundary(c, c, partition_2d(g, "bottom")) - np.pi / 2) <= g.h[0] ** 2
    errs = []
    for n in (15, 31, 63):
        g = build_grid_2d(n)
        e = np.exp(g.x1.points)
        errs.append(inner_product_boundary(e, np.ones_like(e), partition_2d(g, "bottom")) - (np.exp(np.pi) - 1))
    assert np.all(np.abs(_conv_ratio(errs) - 4.0) < 0.1)


def test_boundary_product_shape_check():
    g = build_grid_2d(5)
    with pytest.raises(ValueError):
        inner_product_boundary(np.ones(3), np.ones(3), partition_2d(g))


def test_partition_requires_control():
    g = build_grid_1d(1.0, 5)
    with pytest.raises(ConfigError):
        partition_1d(g, "neumann", "neumann")
    with pytest.raises(ConfigError):
        BoundaryPartition(g, {"left": "dirichlet"})
    with pytest.raises(ConfigError):
        partition_1d(g, "robin", "dirichlet")
    with pytest.raises(ConfigError):
        BoundaryPartition(build_grid_2d(5), {"left": "dirichlet", "right": "dirichlet", "bottom": "neumann", "top": "neumann"})


@pytest.mark.parametrize("side", ["left", "right", "bottom", "top"])
def test_partition_measures_cover_boundary(side):
    g = build_grid_2d(6, 9, L1=2.0, L2=3.0)
    part = partition_2d(g, side)
    assert part.total_measure == pytest.approx(2 * (2.0 + 3.0))
    neumann = sum(part.measure(s) for s in part.sides if part.sides[s] == "neumann")
    assert part.control_measure + neumann == pytest.approx(part.total_measure)
    assert part.control_measure > 0
    assert part.control_weights.sum() == pytest.approx(part.control_measure)
    assert part.n_control == part.control_mask.sum()


def test_partition_1d_counts():
    g = build_grid_1d(1.0, 5)
    part = partition_1d(g, "dirichlet", "dirichlet")
    assert part.control_measure + 0 == part.total_measure == 2
    assert list(part.control_indices) == [0, 6]


def test_scalar_field_shape_guard():
    g = build_grid_1d(1.0, 5)
    with pytest.raises(ConfigError):
        ScalarField(g, np.ones(4))
    f = ScalarField.from_function(g, lambda x: x**2)
    assert (f - f).norm() == 0.0
    assert (f + 1.0).values[0] == 1.0
