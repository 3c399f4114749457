"""Recovery of the coefficients (p, q, f) of the elliptic equation

    -div(p grad u) + lambda q u = f

from sampled (possibly noisy) solutions, by Sobolev-gradient descent on
either the classical energy misfit or the stabilized residual objective.
"""

from .grid import (
    BoundaryMask,
    Field2D,
    Grid2D,
    GridMismatchError,
    ZeroDenominator,
    boundary_overwrite,
    boundary_restrict,
    field_from_csv,
    field_from_json,
    field_to_csv,
    field_to_json,
    grad_inner,
    gradient,
    h1_seminorm_sq,
    inner,
    integrate,
    rel_l1_error,
    unit_square_grid,
)
from .solver import (
    NonConvergence,
    SolverConfig,
    StencilOperator,
    apply_inverse_L,
    assemble,
    solve_dirichlet,
    solve_helmholtz_zero_bc,
    solve_poisson_zero_bc,
)
from .functionals import (
    ENERGY,
    RESIDUAL,
    CoefficientTriple,
    ProblemInstance,
    TangentTriple,
    energy_misfit,
    energy_misfit_expanded,
    energy_misfit_grad,
    energy_misfit_second_diff,
    equation_residual,
    forward_solutions,
    misfit_difference_identity,
    quotient_recover_1d,
    residual_objective,
    residual_objective_grad,
    total_objective,
    total_objective_grad,
)
from .sobolev import smoothness_gain, sobolev_gradient
from .descent import (
    DescentConfig,
    DescentTrace,
    LineSearchStalled,
    initial_triple,
    project_cutoff,
    run,
)
from .pipeline import (
    CubicSurface,
    ExperimentSpec,
    IllConditioned,
    SpecValidationError,
    UnknownExample,
    add_uniform_noise,
    paper_setup,
    smooth_cubic,
    smooth_poly5,
    synthesize,
    truth_field,
)

__version__ = "0.1.0"
