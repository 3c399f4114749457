import numpy as np
import pytest

from ellinv import (
    Field2D,
    Grid2D,
    GridMismatchError,
    boundary_overwrite,
    boundary_restrict,
    field_from_csv,
    field_from_json,
    field_to_csv,
    field_to_json,
    grad_inner,
    gradient,
    inner,
    integrate,
    rel_l1_error,
    unit_square_grid,
)
from ellinv.grid import ZeroDenominator, face_weights, node_weights


def test_grid_invariants():
    g = unit_square_grid(49)
    assert g.hx == pytest.approx(2.0 / 48)
    assert g.hy == pytest.approx(2.0 / 48)
    with pytest.raises(ValueError):
        Grid2D(-1, 1, -1, 1, 2, 5)
    with pytest.raises(ValueError):
        Grid2D(1, -1, -1, 1, 5, 5)


def test_field_rejects_bad_values():
    g = unit_square_grid(5)
    with pytest.raises(ValueError):
        Field2D(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        Field2D(g, np.zeros((4, 4)))


def test_integrate_constants():
    g = unit_square_grid(49)
    assert integrate(Field2D.constant(g, 1.0)) == pytest.approx(4.0)
    assert integrate(Field2D.constant(g, 0.0)) == 0.0


def test_integrate_quadratic():
    # composite trapezoid bound: (1/12) h^2 |f''| * area = 1.16e-3 on 49x49
    g = unit_square_grid(49)
    x2 = Field2D.from_function(g, lambda x, y: x**2)
    assert integrate(x2) == pytest.approx(4.0 / 3.0, abs=1.2e-3)
    oracle = np.trapezoid(np.trapezoid(g.meshgrid()[0] ** 2, g.xs(), axis=1), g.ys())
    assert integrate(x2) == pytest.approx(oracle, rel=1e-13)


def test_integrate_linearity():
    g = unit_square_grid(21)
    rng = np.random.default_rng(0)
    a = Field2D(g, rng.standard_normal(g.shape))
    b = Field2D(g, rng.standard_normal(g.shape))
    lhs = integrate(Field2D(g, 2.5 * a.values - 1.25 * b.values))
    rhs = 2.5 * integrate(a) - 1.25 * integrate(b)
    assert lhs == pytest.approx(rhs, rel=1e-14)


def test_inner_basics():
    g = unit_square_grid(25)
    rng = np.random.default_rng(1)
    a = Field2D(g, rng.standard_normal(g.shape))
    zero = Field2D.constant(g, 0.0)
    assert inner(a, zero) == 0.0
    assert inner(a, a) >= 0.0


def test_inner_sine_product():
    g = unit_square_grid(49)
    s = Field2D.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    assert inner(s, s) == pytest.approx(1.0, abs=1e-3)


def test_grid_mismatch_rejected():
    a = Field2D.constant(unit_square_grid(5), 1.0)
    b = Field2D.constant(unit_square_grid(7), 1.0)
    with pytest.raises(GridMismatchError):
        inner(a, b)
    with pytest.raises(GridMismatchError):
        _ = a + b


def test_gradient_affine_exact():
    g = unit_square_grid(17)
    a = Field2D.from_function(g, lambda x, y: 3.0 * x - 2.0 * y + 1.0)
    dx, dy = gradient(a)
    assert np.abs(dx.values - 3.0).max() < 1e-13
    assert np.abs(dy.values + 2.0).max() < 1e-13
    c = Field2D.constant(g, 4.2)
    dx, dy = gradient(c)
    assert np.abs(dx.values).max() < 1e-13
    assert np.abs(dy.values).max() < 1e-13


def test_gradient_second_order():
    errs = []
    for n in (17, 33, 65):
        g = unit_square_grid(n)
        a = Field2D.from_function(g, lambda x, y: np.sin(np.pi * x) + 0.0 * y)
        dx, _ = gradient(a)
        exact = np.cos(np.pi * g.meshgrid()[0]) * np.pi
        errs.append(np.abs(dx.values - exact).max())
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert min(orders) > 1.9


def test_boundary_overwrite_semantics():
    g = unit_square_grid(9)
    rng = np.random.default_rng(3)
    a = Field2D(g, rng.standard_normal(g.shape))
    s = Field2D(g, rng.standard_normal(g.shape))
    assert np.array_equal(boundary_overwrite(a, a).values, a.values)
    out = boundary_overwrite(a, s)
    assert np.array_equal(boundary_restrict(out), boundary_restrict(s))
    # node-by-node: interior untouched
    for j in range(1, g.ny - 1):
        for i in range(1, g.nx - 1):
            assert out.values[j, i] == a.values[j, i]


def test_face_quadrature_affine_energy():
    # |grad(x+y)|^2 integrates to 2 * area = 8, exactly, in the face form
    g = unit_square_grid(13)
    a = Field2D.from_function(g, lambda x, y: x + y)
    assert grad_inner(a, a) == pytest.approx(8.0, rel=1e-14)


def test_node_and_face_weights_sum_to_area():
    g = Grid2D(-1.0, 2.0, 0.0, 1.0, 7, 11)
    assert node_weights(g).sum() == pytest.approx(3.0, rel=1e-13)
    wx, wy = face_weights(g)
    assert wx.sum() == pytest.approx(3.0, rel=1e-13)
    assert wy.sum() == pytest.approx(3.0, rel=1e-13)


def test_rel_l1_error_cases():
    g = unit_square_grid(9)
    t = Field2D.from_function(g, lambda x, y: 1.0 + x * y)
    assert rel_l1_error(t, t) == 0.0
    assert rel_l1_error(2.0 * t, t) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ZeroDenominator):
        rel_l1_error(t, Field2D.constant(g, 0.0))


def test_rel_l1_error_half_domain_oracle():
    g = unit_square_grid(9)
    truth = Field2D.constant(g, 1.0)
    bump = np.where(g.meshgrid()[0] > 0, 0.25, 0.0)
    a = Field2D(g, truth.values + bump)
    w = node_weights(g)
    expected = (w * np.abs(bump)).sum() / (w * np.abs(truth.values)).sum()
    assert rel_l1_error(a, truth) == pytest.approx(expected, rel=1e-13)


def test_csv_roundtrip():
    g = unit_square_grid(7)
    rng = np.random.default_rng(4)
    a = Field2D(g, rng.standard_normal(g.shape))
    text = field_to_csv(a)
    assert len(text.strip().splitlines()) == g.ny
    back = field_from_csv(g, text)
    assert np.array_equal(back.values, a.values)


def test_json_roundtrip():
    g = Grid2D(-1.0, 1.0, 0.0, 2.0, 5, 9)
    rng = np.random.default_rng(5)
    a = Field2D(g, rng.standard_normal(g.shape))
    back = field_from_json(field_to_json(a))
    assert back.grid == g
    assert np.array_equal(back.values, a.values)
