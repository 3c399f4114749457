"""Block-coordinate gradient descent with boundary pinning for p.

Each outer iteration updates the active components in the order p, q, f, each
with its own backtracking line search against the selected functional and each
seeing the partially updated triple.  The p direction is Sobolev-smoothed so
it vanishes on the boundary: the boundary values of p never change during a
run, bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .grid import Field2D, ZeroDenominator, boundary_restrict, inner, rel_l1_error, set_boundary
from .solver import NonConvergence, SolverConfig, solve_dirichlet
from .functionals import (
    RESIDUAL,
    FUNCTIONALS,
    CoefficientTriple,
    ProblemInstance,
    total_objective,
    total_objective_grad,
)
from .sobolev import sobolev_gradient

COMPONENTS = ("p", "q", "f")


class LineSearchStalled(UserWarning):
    """All active components were frozen in one iteration (reported, not fatal)."""


@dataclass(frozen=True)
class DescentConfig:
    functional: str = RESIDUAL
    recover_p: bool = True
    recover_q: bool = False
    recover_f: bool = False
    alpha0: float = 1.0
    shrink: float = 0.5
    growth: float = 1.2
    sufficient_decrease: float = 1e-4
    alpha_min: float = 1e-16
    max_iters: int = 500
    stop_rel_decrease: float = 1e-8
    stop_window: int = 10
    cutoff: float | None = None
    neuberger_p: bool = True
    neuberger_q: bool = False
    neuberger_f: bool = False
    solver: SolverConfig = dc_field(default_factory=SolverConfig)

    def __post_init__(self):
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.functional not in FUNCTIONALS:
            raise ValueError(f"unknown functional {self.functional!r}")

    def active(self) -> tuple[str, ...]:
        return tuple(
            name
            for name, on in zip(COMPONENTS, (self.recover_p, self.recover_q, self.recover_f))
            if on
        )


@dataclass
class TraceRow:
    iteration: int
    value: float
    alpha_p: float = 0.0
    alpha_q: float = 0.0
    alpha_f: float = 0.0
    gnorm_p: float = float("nan")
    gnorm_q: float = float("nan")
    gnorm_f: float = float("nan")
    relerr_p: float = float("nan")
    relerr_q: float = float("nan")
    relerr_f: float = float("nan")
    seconds: float = 0.0


TRACE_HEADER = (
    "iter,G,alpha_p,alpha_q,alpha_f,gnorm_p,gnorm_q,gnorm_f,"
    "relerr_p,relerr_q,relerr_f,seconds"
)


@dataclass
class DescentTrace:
    rows: list[TraceRow] = dc_field(default_factory=list)
    stopped_reason: str = ""
    snapshots: dict[int, CoefficientTriple] = dc_field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for r in self.rows:
            w.writerow(
                [r.iteration]
                + [
                    format(x, ".17g")
                    for x in (
                        r.value, r.alpha_p, r.alpha_q, r.alpha_f,
                        r.gnorm_p, r.gnorm_q, r.gnorm_f,
                        r.relerr_p, r.relerr_q, r.relerr_f, r.seconds,
                    )
                ]
            )
        return buf.getvalue()


def project_cutoff(p: Field2D, nu: float) -> Field2D:
    """Node-wise max(p, nu): the prior-art stabilization that clamps descent
    iterates of p from below."""
    return Field2D(p.grid, np.maximum(p.values, float(nu)))


def initial_triple(inst: ProblemInstance, cfg: SolverConfig | None = None,
                   p0: Field2D | None = None, q0: Field2D | None = None,
                   f0: Field2D | None = None) -> CoefficientTriple:
    """Default start: p0 the harmonic extension of the pinned boundary data
    (satisfies the constraint by construction), q0 = f0 = 0."""
    grid = inst.grid
    zero = Field2D.constant(grid, 0.0)
    if p0 is None:
        one = Field2D.constant(grid, 1.0)
        p0 = solve_dirichlet(one, zero, 0.0, zero, inst.p_boundary, cfg)
    if q0 is None:
        q0 = zero.copy()
    if f0 is None:
        f0 = zero.copy()
    return CoefficientTriple(p0, q0, f0)


def _relerr(a: Field2D, truth: Field2D | None) -> float:
    if truth is None:
        return float("nan")
    try:
        return rel_l1_error(a, truth)
    except ZeroDenominator:
        return float("nan")


class _Driver:
    """Holds the mutable line-search state across outer iterations."""

    def __init__(self, inst: ProblemInstance, cfg: DescentConfig):
        self.inst = inst
        self.cfg = cfg
        self.warm = {name: cfg.alpha0 for name in COMPONENTS}

    def objective(self, c: CoefficientTriple) -> float:
        return total_objective(c, self.inst, self.cfg.solver, self.cfg.functional)

    def gradient(self, c: CoefficientTriple) -> CoefficientTriple:
        return total_objective_grad(c, self.inst, self.cfg.solver, self.cfg.functional)

    def _candidate(self, c: CoefficientTriple, name: str, step: Field2D) -> CoefficientTriple:
        cur: Field2D = getattr(c, name)
        new = cur - step
        if name == "p":
            if self.cfg.cutoff is not None:
                new = project_cutoff(new, self.cfg.cutoff)
            new = set_boundary(new, self.inst.p_boundary)
        return replace(c, **{name: new})

    def step_block(self, c: CoefficientTriple, g_value: float
                   ) -> tuple[CoefficientTriple, float, dict, dict, bool]:
        """One outer iteration p -> q -> f.  Returns the updated triple, the
        new functional value, per-component steps and gradient norms, and
        whether every active component froze."""
        cfg = self.cfg
        alphas = {name: 0.0 for name in COMPONENTS}
        gnorms = {name: float("nan") for name in COMPONENTS}
        any_accepted = False
        for name in cfg.active():
            grad_triple = self.gradient(c)
            g: Field2D = getattr(grad_triple, name)
            gnorms[name] = math.sqrt(max(inner(g, g), 0.0))
            use_neuberger = getattr(cfg, f"neuberger_{name}")
            d = sobolev_gradient(g, cfg.solver) if use_neuberger else g
            slope = inner(g, d)
            if not np.isfinite(slope) or slope <= 0.0:
                continue
            alpha = self.warm[name]
            accepted = False
            while alpha >= cfg.alpha_min:
                candidate = self._candidate(c, name, alpha * d)
                try:
                    value = self.objective(candidate)
                except NonConvergence:
                    alpha *= cfg.shrink
                    continue
                if value <= g_value - cfg.sufficient_decrease * alpha * slope:
                    accepted = True
                    break
                alpha *= cfg.shrink
            if accepted:
                c = candidate
                g_value = value
                alphas[name] = alpha
                self.warm[name] = alpha * cfg.growth
                any_accepted = True
        return c, g_value, alphas, gnorms, not any_accepted


def run(c0: CoefficientTriple, inst: ProblemInstance, cfg: DescentConfig,
        snapshot_iters=None, on_iteration=None) -> tuple[CoefficientTriple, DescentTrace]:
    """Drive block-coordinate descent from c0.

    Stops on the iteration cap, on relative functional decrease below
    ``cfg.stop_rel_decrease`` over a ``cfg.stop_window`` window, or when every
    active component freezes (stall: reported as a warning, not an error).

    ``snapshot_iters`` collects copies of the triple at the named iterations;
    ``on_iteration(m, c, row)`` is called after every completed iteration.
    """
    if not np.array_equal(boundary_restrict(c0.p), np.asarray(inst.p_boundary, dtype=float)):
        raise ValueError("initial p does not satisfy the pinned boundary constraint")
    inst.warn_if_underdetermined(cfg.recover_p, cfg.recover_q, cfg.recover_f)
    driver = _Driver(inst, cfg)
    c = c0.copy()
    if cfg.cutoff is not None:
        c = replace(c, p=set_boundary(project_cutoff(c.p, cfg.cutoff), inst.p_boundary))
    snapshot_iters = set(snapshot_iters or ())
    trace = DescentTrace()
    t_start = time.perf_counter()
    truth = inst.truth
    try:
        value = driver.objective(c)
    except NonConvergence as exc:
        trace.stopped_reason = "solver_failure"
        exc.trace = trace
        raise

    def record(m: int, val: float, alphas: dict, gnorms: dict) -> TraceRow:
        row = TraceRow(
            iteration=m,
            value=val,
            alpha_p=alphas["p"], alpha_q=alphas["q"], alpha_f=alphas["f"],
            gnorm_p=gnorms["p"], gnorm_q=gnorms["q"], gnorm_f=gnorms["f"],
            relerr_p=_relerr(c.p, truth.p if truth else None),
            relerr_q=_relerr(c.q, truth.q if truth else None),
            relerr_f=_relerr(c.f, truth.f if truth else None),
            seconds=time.perf_counter() - t_start,
        )
        trace.rows.append(row)
        return row

    zeros = {name: 0.0 for name in COMPONENTS}
    nans = {name: float("nan") for name in COMPONENTS}
    record(0, value, zeros, nans)
    trace.stopped_reason = "max_iters"
    try:
        for m in range(1, cfg.max_iters + 1):
            c, value, alphas, gnorms, stalled = driver.step_block(c, value)
            row = record(m, value, alphas, gnorms)
            if m in snapshot_iters:
                trace.snapshots[m] = c.copy()
            if on_iteration is not None:
                on_iteration(m, c, row)
            if stalled:
                warnings.warn(
                    f"line search stalled at iteration {m}: no component found a "
                    "decreasing step", LineSearchStalled, stacklevel=2,
                )
                trace.stopped_reason = "stalled"
                break
            w = cfg.stop_window
            if m >= w:
                old = trace.rows[m - w].value
                if old - value <= cfg.stop_rel_decrease * max(abs(old), 1e-300):
                    trace.stopped_reason = "converged"
                    break
    except NonConvergence as exc:
        # let callers persist whatever progress was made before the failure
        trace.stopped_reason = "solver_failure"
        exc.trace = trace
        raise
    return c, trace
