"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest

from ellinv import (
    CoefficientTriple,
    Field2D,
    ProblemInstance,
    TangentTriple,
    boundary_restrict,
    solve_dirichlet,
    unit_square_grid,
)


def smooth_random_field(grid, rng, amp=0.5, kmax=2, offset=0.0):
    """Band-limited random field: a few low-frequency sine/cosine modes,
    rescaled to the requested amplitude.  Smooth enough that central finite
    differences of the functionals are trustworthy oracles."""
    X, Y = grid.meshgrid()
    v = np.zeros(grid.shape)
    for _ in range(3):
        a = int(rng.integers(1, kmax + 1))
        b = int(rng.integers(1, kmax + 1))
        v += rng.normal() * np.sin(a * np.pi * X / 2.0) * np.cos(b * np.pi * Y / 2.0)
    peak = np.abs(v).max()
    if peak > 0:
        v *= amp / peak
    return Field2D(grid, v + offset)


def random_admissible_triple(grid, rng):
    """Random c = (p, q, f) with p bounded away from zero and q >= 0."""
    return CoefficientTriple(
        smooth_random_field(grid, rng, amp=0.5, offset=1.2),
        smooth_random_field(grid, rng, amp=0.2, offset=0.3),
        smooth_random_field(grid, rng, amp=0.8),
    )


def random_tangent(grid, rng, amp=0.5):
    h1 = smooth_random_field(grid, rng, amp=amp)
    v = h1.values.copy()
    v[0, :] = v[-1, :] = 0.0
    v[:, 0] = v[:, -1] = 0.0
    return TangentTriple(
        Field2D(grid, v),
        smooth_random_field(grid, rng, amp=amp),
        smooth_random_field(grid, rng, amp=amp),
    )


def shifted_triple(c, t, s):
    return CoefficientTriple(
        Field2D(c.grid, c.p.values + s * t.h1.values),
        Field2D(c.grid, c.q.values + s * t.h2.values),
        Field2D(c.grid, c.f.values + s * t.h3.values),
    )


def fd_directional(fun, c, t, eps=1e-5):
    """Central finite-difference directional derivative of fun at c along t."""
    return (fun(shifted_triple(c, t, eps)) - fun(shifted_triple(c, t, -eps))) / (2 * eps)


def fd_second(fun, c, t, eps=1e-3):
    """Central second difference of fun at c along t."""
    return (fun(shifted_triple(c, t, eps)) - 2 * fun(c) + fun(shifted_triple(c, t, -eps))) / eps**2


def build_instance(n=17, lam=0.7, seed=7):
    """Synthetic ground-truth instance on an n x n grid: smooth coefficients,
    measured data generated by the forward solver itself."""
    grid = unit_square_grid(n)
    rng = np.random.default_rng(seed)
    truth = CoefficientTriple(
        smooth_random_field(grid, rng, amp=0.4, offset=1.5),
        smooth_random_field(grid, rng, amp=0.2, offset=0.5),
        smooth_random_field(grid, rng, amp=1.0),
    )
    phi = Field2D.from_function(grid, lambda x, y: x + y + 4.0)
    u = solve_dirichlet(truth.p, truth.q, lam, truth.f, phi)
    return ProblemInstance(
        grid=grid,
        lambdas=(lam,),
        measured={lam: u},
        p_boundary=boundary_restrict(truth.p),
        truth=truth,
    )


@pytest.fixture(scope="session")
def instance17():
    return build_instance(17)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2024)
