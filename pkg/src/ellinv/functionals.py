"""Objective functionals for coefficient recovery and their L2 gradients.

Two functionals drive the recovery of c = (p, q, f) from sampled solutions
u_lam of  -div(p grad u) + lam*q*u = f:

* the energy misfit  E_lam(c) = int p |grad(u_lam - u_c)|^2 + lam q (u_lam - u_c)^2,
  where u_c re-solves the equation with coefficients c and the data's boundary
  values (convex; needs p bounded away from zero);
* the residual objective  R_lam(c) = |T(c)|^2 + |grad v|^2  built from the
  strong-form residual T(c) = -div(p grad u_lam) + lam q u_lam - f evaluated
  on the data, with -lap(v) = T, v = 0 on the boundary (needs no lower bound
  on p; the potential v term restores stability).

All gradient formulas are implemented as exact adjoints of the discrete
forms: gradient-energy integrals use the same face averages and face
differences as the flux stencil, so finite-difference checks of every
gradient and second differential pass at solver precision, not just at
discretization order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import (
    Field2D,
    Grid2D,
    face_average,
    face_gradients,
    grad_inner,
    inner,
    node_weights,
)
from .solver import (
    NonConvergence,
    SolverConfig,
    assemble,
    apply_inverse_L,
    solve_dirichlet,
    solve_poisson_zero_bc,
)

ENERGY = "energy"
RESIDUAL = "residual"
FUNCTIONALS = (ENERGY, RESIDUAL)


@dataclass
class CoefficientTriple:
    """The unknown c = (p, q, f), all sampled on one grid.

    No positivity of p is enforced here: the residual objective is designed
    to work without a lower bound.
    """

    p: Field2D
    q: Field2D
    f: Field2D

    def __post_init__(self):
        self.p._check(self.q)
        self.p._check(self.f)

    @property
    def grid(self) -> Grid2D:
        return self.p.grid

    def copy(self) -> "CoefficientTriple":
        return CoefficientTriple(self.p.copy(), self.q.copy(), self.f.copy())

    @classmethod
    def constant(cls, grid: Grid2D, p: float = 1.0, q: float = 0.0, f: float = 0.0):
        return cls(Field2D.constant(grid, p), Field2D.constant(grid, q),
                   Field2D.constant(grid, f))


@dataclass
class TangentTriple:
    """Perturbation direction (h1, h2, h3); h1 vanishes on the boundary."""

    h1: Field2D
    h2: Field2D
    h3: Field2D

    def __post_init__(self):
        self.h1._check(self.h2)
        self.h1._check(self.h3)
        v = self.h1.values
        if np.any(v[0, :] != 0) or np.any(v[-1, :] != 0) or np.any(v[:, 0] != 0) or np.any(v[:, -1] != 0):
            raise ValueError("h1 must vanish exactly on the boundary")


@dataclass
class ProblemInstance:
    """Measured solutions plus the pinned boundary data of the true p.

    measured maps each lambda to either a plain Field2D or a smoothed-surface
    object (anything with .field/.grad_x/.grad_y Field2D attributes, see
    pipeline.CubicSurface); surfaces supply face gradients for the residual
    objective on noisy data.
    """

    grid: Grid2D
    lambdas: tuple
    measured: dict
    p_boundary: np.ndarray
    truth: CoefficientTriple | None = None
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.lambdas = tuple(self.lambdas)
        if not self.lambdas:
            raise ValueError("need at least one lambda")
        for lam in self.lambdas:
            if lam not in self.measured:
                raise ValueError(f"no measured field for lambda={lam}")
            if data_field(self.measured[lam]).grid != self.grid:
                raise ValueError(f"measured field for lambda={lam} is on a different grid")

    def data(self, lam: float):
        return self.measured[lam]

    def warn_if_underdetermined(self, recover_p: bool, recover_q: bool, recover_f: bool) -> None:
        if recover_p and recover_q and recover_f and len(set(self.lambdas)) < 3:
            warnings.warn(
                "joint recovery of (p, q, f) needs at least three distinct "
                f"lambda values; got {sorted(set(self.lambdas))}",
                stacklevel=2,
            )


def data_field(data) -> Field2D:
    """Node values of a measured datum (plain field or smoothed surface)."""
    return data if isinstance(data, Field2D) else data.field


def data_face_gradients(data) -> tuple[np.ndarray, np.ndarray]:
    """Face-midpoint gradients of a measured datum.

    Plain fields use divided differences.  Smoothed surfaces average their
    node-derivative fields onto faces, which damps data noise at every
    frequency relative to raw differencing.
    """
    if isinstance(data, Field2D):
        return face_gradients(data)
    sx = data.grad_x.values
    sy = data.grad_y.values
    gx = 0.5 * (sx[:, :-1] + sx[:, 1:])
    gy = 0.5 * (sy[:-1, :] + sy[1:, :])
    return gx, gy


# -- forward map ---------------------------------------------------------------

def forward_solutions(c: CoefficientTriple, inst: ProblemInstance,
                      cfg: SolverConfig | None = None) -> dict:
    """Solve the equation with coefficients c and the data's boundary values,
    for every lambda of the instance."""
    out = {}
    for lam in inst.lambdas:
        out[lam] = forward_solution(c, inst, lam, cfg)
    return out


def forward_solution(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                     cfg: SolverConfig | None = None) -> Field2D:
    u_data = data_field(inst.data(lam))
    try:
        return solve_dirichlet(c.p, c.q, lam, c.f, u_data, cfg)
    except NonConvergence as exc:
        raise NonConvergence(f"forward solve at lambda={lam}: {exc}", exc.residual) from exc


# -- energy misfit -------------------------------------------------------------

def energy_misfit(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                  cfg: SolverConfig | None = None, *, u_c: Field2D | None = None) -> float:
    """int p |grad(u - u_c)|^2 + lam q (u - u_c)^2; zero iff u_c matches the data."""
    if u_c is None:
        u_c = forward_solution(c, inst, lam, cfg)
    u = data_field(inst.data(lam))
    e = u - u_c
    return grad_inner(e, e, c.p) + lam * inner(c.q * e, e)


def energy_misfit_expanded(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                           cfg: SolverConfig | None = None, *,
                           u_c: Field2D | None = None) -> float:
    """Equivalent difference-of-energies form of the misfit.

    Equals :func:`energy_misfit` up to solver tolerance; this is the form
    whose c-dependence is explicit, which the gradient formulas differentiate.
    """
    if u_c is None:
        u_c = forward_solution(c, inst, lam, cfg)
    u = data_field(inst.data(lam))
    return (
        grad_inner(u, u, c.p) - grad_inner(u_c, u_c, c.p)
        + lam * (inner(c.q * u, u) - inner(c.q * u_c, u_c))
        - 2.0 * (inner(c.f, u) - inner(c.f, u_c))
    )


def _scatter_faces(grid: Grid2D, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Accumulate per-face contributions onto their endpoint nodes."""
    acc = np.zeros(grid.shape)
    acc[:, :-1] += sx
    acc[:, 1:] += sx
    acc[:-1, :] += sy
    acc[1:, :] += sy
    return acc


def energy_misfit_grad(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                       cfg: SolverConfig | None = None, *,
                       u_c: Field2D | None = None) -> CoefficientTriple:
    """L2 gradient (g_p, g_q, g_f) of the energy misfit.

    g_p is the face-consistent discretization of |grad u|^2 - |grad u_c|^2,
    g_q = lam (u^2 - u_c^2), g_f = -2 (u - u_c).  Because the face forms match
    the stencil, the directional derivative <g, h> reproduces finite
    differences of the misfit at solver precision.
    """
    if u_c is None:
        u_c = forward_solution(c, inst, lam, cfg)
    g = c.grid
    u = data_field(inst.data(lam))
    gux, guy = face_gradients(u)
    gcx, gcy = face_gradients(u_c)
    from .grid import face_weights

    wx, wy = face_weights(g)
    sx = 0.5 * wx * (gux**2 - gcx**2)
    sy = 0.5 * wy * (guy**2 - gcy**2)
    g_p = Field2D(g, _scatter_faces(g, sx, sy) / node_weights(g))
    g_q = Field2D(g, lam * (u.values**2 - u_c.values**2))
    g_f = -2.0 * (u - u_c)
    return CoefficientTriple(g_p, g_q, g_f)


def _flux_divergence_interior(coeff: Field2D, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """-div(coeff * G) at interior nodes, with G given by face gradients."""
    g = coeff.grid
    pfx, pfy = face_average(coeff)
    fx = pfx * gx
    fy = pfy * gy
    return (
        -(fx[1:-1, 1:] - fx[1:-1, :-1]) / g.hx
        - (fy[1:, 1:-1] - fy[:-1, 1:-1]) / g.hy
    )


def linearized_residual(h: TangentTriple, u_c: Field2D, lam: float) -> Field2D:
    """e(h) = -div(h1 grad u_c) + lam h2 u_c - h3 on interior nodes (0 on the boundary)."""
    g = u_c.grid
    gx, gy = face_gradients(u_c)
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = (
        _flux_divergence_interior(h.h1, gx, gy)
        + lam * h.h2.values[1:-1, 1:-1] * u_c.values[1:-1, 1:-1]
        - h.h3.values[1:-1, 1:-1]
    )
    return Field2D(g, out)


def energy_misfit_second_diff(c: CoefficientTriple, h: TangentTriple, k: TangentTriple,
                              inst: ProblemInstance, lam: float,
                              cfg: SolverConfig | None = None, *,
                              u_c: Field2D | None = None) -> float:
    """Second differential 2 <L_c^{-1} e(h), e(k)>; symmetric, and nonnegative
    on the diagonal whenever the operator is positive."""
    if u_c is None:
        u_c = forward_solution(c, inst, lam, cfg)
    e_h = linearized_residual(h, u_c, lam)
    e_k = linearized_residual(k, u_c, lam)
    op = assemble(c.p, c.q, lam, cfg)
    w = apply_inverse_L(op, e_h, cfg)
    return 2.0 * inner(w, e_k)


def misfit_difference_identity(c1: CoefficientTriple, c2: CoefficientTriple,
                               inst: ProblemInstance, lam: float,
                               cfg: SolverConfig | None = None) -> tuple[float, float]:
    """Both sides of the closed-form split of E(c1) - E(c2).

    Returns (lhs, rhs) where lhs is the misfit difference and rhs expresses it
    through the coefficient differences only; they agree to solver tolerance.
    """
    u1 = forward_solution(c1, inst, lam, cfg)
    u2 = forward_solution(c2, inst, lam, cfg)
    u = data_field(inst.data(lam))
    lhs = energy_misfit(c1, inst, lam, cfg, u_c=u1) - energy_misfit(c2, inst, lam, cfg, u_c=u2)
    dp = c1.p - c2.p
    dq = c1.q - c2.q
    df = c1.f - c2.f
    rhs = (
        grad_inner(u, u, dp) - grad_inner(u1, u2, dp)
        + lam * (inner(dq * u, u) - inner(dq * u1, u2))
        - 2.0 * inner(df, u - 0.5 * (u1 + u2))
    )
    return lhs, rhs


# -- residual objective --------------------------------------------------------

def equation_residual(c: CoefficientTriple, u_data, lam: float) -> Field2D:
    """Strong-form residual T(c) = -div(p grad u) + lam q u - f on the data.

    Computed in conservative flux form (difference of face fluxes), interior
    nodes only; boundary nodes are set to zero since T is only ever paired
    with zero-boundary quantities.  Note T contains second differences of the
    data, so it amplifies measurement noise.
    """
    u = data_field(u_data)
    c.p._check(u)
    gx, gy = data_face_gradients(u_data)
    g = c.grid
    out = np.zeros(g.shape)
    out[1:-1, 1:-1] = (
        _flux_divergence_interior(c.p, gx, gy)
        + lam * c.q.values[1:-1, 1:-1] * u.values[1:-1, 1:-1]
        - c.f.values[1:-1, 1:-1]
    )
    return Field2D(g, out)


def residual_objective(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                       cfg: SolverConfig | None = None) -> tuple[float, Field2D, Field2D]:
    """Value of |T|^2 + |grad v|^2 with -lap(v) = T, v|boundary = 0.

    Returns (value, v, T) so callers can reuse the pieces.  The summation-by-
    parts identity |grad v|^2 = <T, v> is verified on every call; a violation
    means a broken Poisson solve and raises NonConvergence.
    """
    cfg = cfg or SolverConfig()
    T = equation_residual(c, inst.data(lam), lam)
    v = solve_poisson_zero_bc(T, cfg)
    tt = inner(T, T)
    grad_energy = grad_inner(v, v)
    tv = inner(T, v)
    scale = max(1.0, tt, abs(grad_energy), abs(tv))
    if abs(grad_energy - tv) > 10.0 * cfg.rtol * scale:
        raise NonConvergence(
            f"potential-energy identity violated: |grad v|^2 = {grad_energy:.6e} "
            f"vs <T,v> = {tv:.6e}",
            residual=abs(grad_energy - tv),
        )
    return tt + grad_energy, v, T


def residual_objective_grad(c: CoefficientTriple, inst: ProblemInstance, lam: float,
                            cfg: SolverConfig | None = None, *,
                            parts: tuple[float, Field2D, Field2D] | None = None
                            ) -> CoefficientTriple:
    """L2 gradient of the residual objective.

    With psi = T + v the components are the face-consistent discretizations of
    g_p = 2 grad(u) . grad(psi),  g_q = 2 lam u psi,  g_f = -2 psi; implemented
    as the exact adjoint of the (linear) map c -> T so finite-difference
    checks pass at solver precision.
    """
    if parts is None:
        parts = residual_objective(c, inst, lam, cfg)
    _, v, T = parts
    g = c.grid
    data = inst.data(lam)
    u = data_field(data)
    gx, gy = data_face_gradients(data)
    psi = T + v
    pv = psi.values
    hxhy = g.hx * g.hy
    # x-face term: hx*hy * gx * (psi_right - psi_left)/hx, scattered to both ends
    sx = hxhy * gx * (pv[:, 1:] - pv[:, :-1]) / g.hx
    sy = hxhy * gy * (pv[1:, :] - pv[:-1, :]) / g.hy
    g_p = Field2D(g, _scatter_faces(g, sx, sy) / node_weights(g))
    g_q = Field2D(g, 2.0 * lam * u.values * pv)
    g_f = -2.0 * psi
    return CoefficientTriple(g_p, g_q, g_f)


# -- sums over lambda ----------------------------------------------------------

def total_objective(c: CoefficientTriple, inst: ProblemInstance,
                    cfg: SolverConfig | None = None, which: str = RESIDUAL) -> float:
    """Sum of the selected per-lambda functional over all instance lambdas."""
    if which == ENERGY:
        return sum(energy_misfit(c, inst, lam, cfg) for lam in inst.lambdas)
    if which == RESIDUAL:
        return sum(residual_objective(c, inst, lam, cfg)[0] for lam in inst.lambdas)
    raise ValueError(f"unknown functional {which!r}")


def total_objective_grad(c: CoefficientTriple, inst: ProblemInstance,
                         cfg: SolverConfig | None = None,
                         which: str = RESIDUAL) -> CoefficientTriple:
    total: CoefficientTriple | None = None
    for lam in inst.lambdas:
        if which == ENERGY:
            g = energy_misfit_grad(c, inst, lam, cfg)
        elif which == RESIDUAL:
            g = residual_objective_grad(c, inst, lam, cfg)
        else:
            raise ValueError(f"unknown functional {which!r}")
        if total is None:
            total = g
        else:
            total = CoefficientTriple(total.p + g.p, total.q + g.q, total.f + g.f)
    assert total is not None
    return total


# -- one-dimensional quotient demonstrator -------------------------------------

def quotient_recover_1d(u: np.ndarray, f: np.ndarray, p0: float,
                        eps: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Recover p on [0,1] from  -(p u')' = f  by the direct quotient formula

        p(x) = (p(0) u'(0) - int_0^x f) / u'(x)

    using central differences for u' and trapezoid cumulative integration.
    Returns (p, unstable) where ``unstable`` flags nodes with |u'| below eps
    (default: the grid spacing), the zones where data noise is amplified.
    """
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    if u.ndim != 1 or u.shape != f.shape or u.size < 3:
        raise ValueError("u and f must be equal-length 1D arrays with >= 3 samples")
    n = u.size
    h = 1.0 / (n - 1)
    du = np.empty(n)
    du[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    du[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    du[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    cumf = np.concatenate(([0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))))
    eps = h if eps is None else eps
    unstable = np.abs(du) < eps
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (p0 * du[0] - cumf) / du
    return p, unstable
