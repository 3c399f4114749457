import numpy as np
import pytest

from ellinv import (
    CoefficientTriple,
    Field2D,
    ProblemInstance,
    TangentTriple,
    boundary_restrict,
    energy_misfit,
    energy_misfit_expanded,
    energy_misfit_grad,
    energy_misfit_second_diff,
    equation_residual,
    forward_solutions,
    inner,
    misfit_difference_identity,
    quotient_recover_1d,
    residual_objective,
    residual_objective_grad,
    solve_dirichlet,
    total_objective,
    total_objective_grad,
    unit_square_grid,
)
from ellinv.functionals import linearized_residual
from ellinv.grid import grad_inner

from conftest import (
    build_instance,
    fd_directional,
    fd_second,
    random_admissible_triple,
    random_tangent,
)

LAM = 0.7


def test_forward_at_truth_matches_data(instance17):
    u = forward_solutions(instance17.truth, instance17)[LAM]
    data = instance17.data(LAM)
    assert np.abs(u.values - data.values).max() < 1e-9


def test_forward_affine_for_trivial_coefficients():
    g = unit_square_grid(11)
    c = CoefficientTriple.constant(g, p=1.0)
    aff = Field2D.from_function(g, lambda x, y: 2.0 * x - y + 3.0)
    inst = ProblemInstance(g, (0.0,), {0.0: aff}, boundary_restrict(c.p))
    u = forward_solutions(c, inst)[0.0]
    assert np.abs(u.values - aff.values).max() < 1e-11


def test_forward_scaling_cancels_without_source():
    # with f = 0 and q = 0 the Dirichlet solution is invariant under p -> 2p
    g = unit_square_grid(15)
    rng = np.random.default_rng(11)
    from conftest import smooth_random_field

    p = smooth_random_field(g, rng, amp=0.4, offset=1.3)
    zero = Field2D.constant(g, 0.0)
    phi = Field2D.from_function(g, lambda x, y: x + y + 4.0)
    u1 = solve_dirichlet(p, zero, 0.0, zero, phi)
    u2 = solve_dirichlet(2.0 * p, zero, 0.0, zero, phi)
    assert np.abs(u1.values - u2.values).max() < 1e-9


def test_energy_misfit_zero_at_truth(instance17):
    assert abs(energy_misfit(instance17.truth, instance17, LAM)) < 1e-8


def test_energy_misfit_nonnegative_and_matches_expanded(instance17, rng):
    for _ in range(5):
        c = random_admissible_triple(instance17.grid, rng)
        e1 = energy_misfit(c, instance17, LAM)
        e2 = energy_misfit_expanded(c, instance17, LAM)
        assert e1 >= 0.0
        assert abs(e1 - e2) <= 1e-8 * max(1.0, abs(e1))


def test_energy_grad_fd_match(instance17, rng):
    for _ in range(3):
        c = random_admissible_triple(instance17.grid, rng)
        grad = energy_misfit_grad(c, instance17, LAM)
        t = random_tangent(instance17.grid, rng)
        analytic = inner(grad.p, t.h1) + inner(grad.q, t.h2) + inner(grad.f, t.h3)
        fd = fd_directional(lambda cc: energy_misfit(cc, instance17, LAM), c, t)
        assert abs(analytic - fd) <= 1e-4 * max(1e-12, abs(fd))


def test_energy_grad_vanishes_at_truth(instance17):
    grad = energy_misfit_grad(instance17.truth, instance17, LAM)
    for comp in (grad.p, grad.q, grad.f):
        assert np.abs(comp.values).max() < 1e-7


def test_energy_grad_f_component_formula(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    u_c = forward_solutions(c, instance17)[LAM]
    grad = energy_misfit_grad(c, instance17, LAM, u_c=u_c)
    expected = -2.0 * (instance17.data(LAM).values - u_c.values)
    assert np.abs(grad.f.values - expected).max() < 1e-12


def test_second_diff_symmetry_and_positivity(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    h = random_tangent(instance17.grid, rng)
    k = random_tangent(instance17.grid, rng)
    s_hk = energy_misfit_second_diff(c, h, k, instance17, LAM)
    s_kh = energy_misfit_second_diff(c, k, h, instance17, LAM)
    s_hh = energy_misfit_second_diff(c, h, h, instance17, LAM)
    assert abs(s_hk - s_kh) <= 1e-10 * max(1.0, abs(s_hk))
    assert s_hh >= -1e-12


def test_second_diff_kernel_direction(instance17, rng):
    # choosing h3 as the linearized flux residual of (h1, h2) makes e(h) = 0
    c = random_admissible_triple(instance17.grid, rng)
    u_c = forward_solutions(c, instance17)[LAM]
    h = random_tangent(instance17.grid, rng)
    zero = Field2D.constant(instance17.grid, 0.0)
    h3 = linearized_residual(TangentTriple(h.h1, h.h2, zero), u_c, LAM)
    hker = TangentTriple(h.h1, h.h2, h3)
    assert abs(energy_misfit_second_diff(c, hker, hker, instance17, LAM)) < 1e-6


def test_second_diff_matches_fd(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    h = random_tangent(instance17.grid, rng)
    s_hh = energy_misfit_second_diff(c, h, h, instance17, LAM)
    fd = fd_second(lambda cc: energy_misfit(cc, instance17, LAM), c, h)
    assert abs(s_hh - fd) <= 1e-3 * max(1e-9, abs(fd))


def test_difference_identity(instance17, rng):
    c1 = random_admissible_triple(instance17.grid, rng)
    c2 = random_admissible_triple(instance17.grid, rng)
    lhs, rhs = misfit_difference_identity(c1, c2, instance17, LAM)
    assert abs(lhs - rhs) <= 1e-6 * (1.0 + abs(lhs))
    lhs0, rhs0 = misfit_difference_identity(c1, c1, instance17, LAM)
    assert lhs0 == 0.0 and abs(rhs0) < 1e-10
    lhs_t, _ = misfit_difference_identity(c1, instance17.truth, instance17, LAM)
    assert lhs_t == pytest.approx(energy_misfit(c1, instance17, LAM), rel=1e-8)


def test_equation_residual_zero_at_truth(instance17):
    T = equation_residual(instance17.truth, instance17.data(LAM), LAM)
    assert np.abs(T.values).max() < 1e-6


def test_equation_residual_annihilates_affine():
    g = unit_square_grid(13)
    c = CoefficientTriple.constant(g, p=1.0)
    aff = Field2D.from_function(g, lambda x, y: x + y)
    T = equation_residual(c, aff, 0.0)
    # zero up to cancellation roundoff in the node coordinates
    assert np.abs(T.values).max() < 1e-12


def test_equation_residual_manufactured_convergence():
    errs = []
    for n in (17, 33):
        g = unit_square_grid(n)
        c = CoefficientTriple.constant(g, p=1.0)
        ustar = Field2D.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        T = equation_residual(c, ustar, 0.0)
        expected = 2.0 * np.pi**2 * ustar.values
        errs.append(np.abs(T.values[1:-1, 1:-1] - expected[1:-1, 1:-1]).max())
    assert np.log2(errs[0] / errs[1]) > 1.9


def test_residual_objective_at_truth(instance17):
    value, v, T = residual_objective(instance17.truth, instance17, LAM)
    assert value < 1e-12
    assert np.abs(v.values).max() < 1e-6


def test_residual_objective_green_identity(instance17, rng):
    cfg_rtol = 1e-10
    c = random_admissible_triple(instance17.grid, rng)
    value, v, T = residual_objective(c, instance17, LAM)
    energy = grad_inner(v, v)
    pairing = inner(T, v)
    assert abs(energy - pairing) <= 10 * cfg_rtol * max(1.0, inner(T, T))
    assert value == pytest.approx(inner(T, T) + energy)


def test_residual_objective_quadratic_homogeneity(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    c2 = CoefficientTriple(2.0 * c.p, 2.0 * c.q, 2.0 * c.f)
    v1 = residual_objective(c, instance17, LAM)[0]
    v2 = residual_objective(c2, instance17, LAM)[0]
    assert v2 == pytest.approx(4.0 * v1, rel=1e-12)


def test_residual_grad_fd_match(instance17, rng):
    # mandatory gate before any descent run uses this gradient
    for _ in range(3):
        c = random_admissible_triple(instance17.grid, rng)
        grad = residual_objective_grad(c, instance17, LAM)
        t = random_tangent(instance17.grid, rng)
        analytic = inner(grad.p, t.h1) + inner(grad.q, t.h2) + inner(grad.f, t.h3)
        fd = fd_directional(lambda cc: residual_objective(cc, instance17, LAM)[0], c, t)
        assert abs(analytic - fd) <= 1e-3 * max(1e-12, abs(fd))


def test_residual_grad_formulas(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    parts = residual_objective(c, instance17, LAM)
    grad = residual_objective_grad(c, instance17, LAM, parts=parts)
    _, v, T = parts
    expected_f = -2.0 * (T.values + v.values)
    assert np.abs(grad.f.values - expected_f).max() < 1e-12
    grad_truth = residual_objective_grad(instance17.truth, instance17, LAM)
    for comp in (grad_truth.p, grad_truth.q, grad_truth.f):
        assert np.abs(comp.values).max() < 1e-6


def test_total_objective_sums(instance17, rng):
    c = random_admissible_triple(instance17.grid, rng)
    single = total_objective(c, instance17, which="residual")
    assert single == pytest.approx(residual_objective(c, instance17, LAM)[0])
    # duplicated lambda doubles the total and is permutation invariant
    doubled = ProblemInstance(
        instance17.grid, (LAM, LAM), {LAM: instance17.data(LAM)},
        instance17.p_boundary, instance17.truth,
    )
    assert total_objective(c, doubled, which="residual") == pytest.approx(2.0 * single)
    assert total_objective(c, doubled, which="energy") == pytest.approx(
        2.0 * total_objective(c, instance17, which="energy"))


def test_total_zero_at_truth_multi_lambda():
    inst3 = _three_lambda_instance()
    val = total_objective(inst3.truth, inst3, which="energy")
    assert abs(val) < 1e-8
    grad = total_objective_grad(inst3.truth, inst3, which="residual")
    assert np.abs(grad.p.values).max() < 1e-6


def _three_lambda_instance():
    g = unit_square_grid(13)
    rng = np.random.default_rng(21)
    from conftest import smooth_random_field

    truth = CoefficientTriple(
        smooth_random_field(g, rng, amp=0.3, offset=1.4),
        smooth_random_field(g, rng, amp=0.2, offset=0.4),
        smooth_random_field(g, rng, amp=0.7),
    )
    phi = Field2D.from_function(g, lambda x, y: x + y + 4.0)
    lambdas = (0.0, 0.5, 1.0)
    measured = {lam: solve_dirichlet(truth.p, truth.q, lam, truth.f, phi) for lam in lambdas}
    return ProblemInstance(g, lambdas, measured, boundary_restrict(truth.p), truth)


def test_underdetermined_warning(instance17):
    with pytest.warns(UserWarning, match="three distinct"):
        instance17.warn_if_underdetermined(True, True, True)


def test_quotient_1d_exact_cases():
    n = 101
    x = np.linspace(0.0, 1.0, n)
    p, mask = quotient_recover_1d(x, np.zeros(n), 1.0)
    assert np.abs(p - 1.0).max() < 1e-12
    assert not mask.any()
    p2, _ = quotient_recover_1d(x, -np.ones(n), 1.0)
    assert np.abs(p2 - (1.0 + x)).max() < 1e-12


def test_quotient_1d_second_order():
    # manufactured: p = 1 + x^2, u = sin(2x), f = -(p u')' computed analytically
    errs = []
    for n in (101, 201):
        x = np.linspace(0.0, 1.0, n)
        u = np.sin(2 * x)
        f = -4.0 * x * np.cos(2 * x) + 4.0 * (1.0 + x**2) * np.sin(2 * x)
        p, mask = quotient_recover_1d(u, f, 1.0)
        keep = ~mask
        errs.append(np.abs(p[keep] - (1.0 + x[keep] ** 2)).max())
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_quotient_1d_flags_small_derivative():
    n = 101
    x = np.linspace(0.0, 1.0, n)
    u = (x - 0.5) ** 2  # derivative 2(x - 0.5) vanishes at the middle node
    p, mask = quotient_recover_1d(u, np.zeros(n), 1.0)
    # central/one-sided differences are exact for quadratics, so the flagged
    # set is exactly where |u'| < h
    h = 1.0 / (n - 1)
    expected = np.abs(2.0 * (x - 0.5)) < h
    assert expected.any()
    assert np.array_equal(mask, expected)


def test_quotient_1d_noise_amplification_single_seed():
    n = 101
    x = np.linspace(0.0, 1.0, n)
    rng = np.random.default_rng(0)
    eps = rng.uniform(-1.0, 1.0, n)
    a = 0.001 * np.trapezoid(np.abs(x), x) / np.trapezoid(np.abs(eps), x)
    noisy = x + a * eps
    realized = np.trapezoid(np.abs(noisy - x), x) / np.trapezoid(np.abs(x), x)
    p, _ = quotient_recover_1d(noisy, np.zeros(n), 1.0)
    relerr = np.trapezoid(np.abs(p - 1.0), x)
    assert relerr / realized >= 10.0
