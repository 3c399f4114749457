"""Command-line front end.

Subcommands:
    forward    solve the forward problem of an experiment spec and emit the
               measured data fields
    recover    run a recovery (descent) for a spec and emit recovered fields,
               the iteration trace, and a summary
    reproduce  run one of the built-in experiments 1-4 with its canned
               configuration, emitting snapshot fields at selected iterations

All delimited output is accompanied by rendered figures unless --no-plots is
given.  Exit codes: 0 ok, 2 spec/config validation failure, 3 numerical
failure (details on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .grid import Field2D, field_to_csv, field_to_json
from .solver import NonConvergence
from .functionals import ProblemInstance, data_field
from .descent import DescentConfig, DescentTrace, initial_triple, run
from .pipeline import (
    ExperimentSpec,
    SpecValidationError,
    descent_config_from_dict,
    paper_descent,
    paper_setup,
    synthesize,
)

DEFAULT_SNAPSHOTS = (10, 20, 50, 500, 1000, 2000)


def _lam_tag(lam: float) -> str:
    return format(lam, "g").replace("-", "m").replace(".", "p")


def _write_field(field: Field2D, stem: Path, fmt: str) -> None:
    if fmt in ("csv", "both"):
        stem.with_suffix(".csv").write_text(field_to_csv(field))
    if fmt in ("json", "both"):
        stem.with_suffix(".json").write_text(field_to_json(field))


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _write_json(d: dict, path: Path) -> None:
    path.write_text(json.dumps({k: _jsonable(v) for k, v in d.items()}, indent=2) + "\n")


def _load_spec(args) -> ExperimentSpec:
    text = Path(args.spec).read_text()
    spec = ExperimentSpec.from_json(text)
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def _public_metadata(inst: ProblemInstance) -> dict:
    """Metadata without the embedded field objects (JSON-serializable part)."""
    return {
        k: v for k, v in inst.metadata.items()
        if not isinstance(v, Field2D) and v is not None
    }


def _emit_data_views(inst: ProblemInstance, out: Path, fmt: str, plots: bool) -> None:
    from . import report

    meta = inst.metadata
    u_true = meta.get("u_true")
    u_noisy = meta.get("u_noisy")
    for lam in inst.lambdas:
        tag = _lam_tag(lam)
        data = data_field(inst.data(lam))
        _write_field(data, out / f"u_data_lam{tag}", fmt)
        if plots:
            report.save_heatmap(data, out / f"fig_u_data_lam{tag}.png", "measured data")
    if isinstance(u_true, Field2D):
        _write_field(u_true, out / "u_true", fmt)
        if plots:
            report.save_heatmap(u_true, out / "fig_u_true.png", "noise-free solution")
    if isinstance(u_noisy, Field2D):
        _write_field(u_noisy, out / "u_noisy", fmt)
        if plots:
            report.save_heatmap(u_noisy, out / "fig_u_noisy.png", "noisy data")


def cmd_forward(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inst = synthesize(spec)
    _emit_data_views(inst, out, args.format, args.plots)
    meta = _public_metadata(inst)
    meta["spec"] = spec.to_dict()
    _write_json(meta, out / "metadata.json")
    return 0


def _descent_config(args, spec: ExperimentSpec) -> DescentConfig:
    overrides = {}
    if args.descent is not None:
        overrides = json.loads(Path(args.descent).read_text())
        if not isinstance(overrides, dict):
            raise SpecValidationError("descent config JSON must be an object")
    overrides.setdefault("functional", spec.functional)
    overrides.setdefault("max_iters", spec.max_iters)
    return descent_config_from_dict(overrides)


def _slow_phase_fraction(trace: DescentTrace, threshold: float = 1e-3) -> float | None:
    """Fraction of iterations whose relative objective decrease is below the
    threshold: a crawling descent (e.g. iterates crossing zero) scores high."""
    values = trace.values()
    if len(values) < 2:
        return None
    prev = values[:-1]
    cur = values[1:]
    denom = [max(abs(p), 1e-300) for p in prev]
    slow = sum(1 for p, c, d in zip(prev, cur, denom) if (p - c) / d < threshold)
    return slow / len(cur)


def _run_recovery(spec: ExperimentSpec, cfg: DescentConfig, out: Path, fmt: str,
                  plots: bool, snapshots) -> int:
    from . import report

    out.mkdir(parents=True, exist_ok=True)
    inst = synthesize(spec)
    c0 = initial_triple(inst, cfg.solver)
    trace = None
    try:
        c, trace = run(c0, inst, cfg, snapshot_iters=snapshots)
        code = 0
    except NonConvergence as exc:
        trace = getattr(exc, "trace", None)
        print(f"error: {exc}", file=sys.stderr)
        c = None
        code = 3
    if trace is not None:
        (out / "trace.csv").write_text(trace.to_csv())
        summary = {
            "relerr_p": trace.rows[-1].relerr_p if trace.rows else None,
            "iterations": trace.rows[-1].iteration if trace.rows else 0,
            "stopped_reason": trace.stopped_reason,
            "realized_noise": inst.metadata.get("realized_noise", 0.0),
            "slow_phase_fraction": _slow_phase_fraction(trace),
        }
        _write_json(summary, out / "summary.json")
    _emit_data_views(inst, out, fmt, plots)
    if inst.truth is not None:
        _write_field(inst.truth.p, out / "p_true", fmt)
        if plots:
            report.save_heatmap(inst.truth.p, out / "fig_p_true.png", "true coefficient p")
    if c is not None:
        stems = {"p": c.p}
        if cfg.recover_q:
            stems["q"] = c.q
        if cfg.recover_f:
            stems["f"] = c.f
        for name, fld in stems.items():
            _write_field(fld, out / f"recovered_{name}", fmt)
        if plots:
            report.save_heatmap(c.p, out / "fig_p_recovered.png", "recovered p")
            report.save_surface(c.p, out / "fig_p_recovered_3d.png", "recovered p")
    if trace is not None:
        for m, snap in sorted(trace.snapshots.items()):
            _write_field(snap.p, out / f"p_iter{m}", fmt)
            if plots:
                report.save_heatmap(snap.p, out / f"fig_p_iter{m}.png", f"p at iteration {m}")
        if plots and trace.rows:
            report.save_trace_plot(trace, out / "fig_trace.png", "descent history")
    return code


def cmd_recover(args) -> int:
    spec = _load_spec(args)
    cfg = _descent_config(args, spec)
    snapshots = _parse_snapshots(args.snapshots)
    return _run_recovery(spec, cfg, Path(args.out), args.format, args.plots, snapshots)


def cmd_reproduce(args) -> int:
    spec = paper_setup(args.example)
    if args.seed is not None:
        spec.seed = args.seed
    if args.nx is not None:
        spec.nx = args.nx
    if args.ny is not None:
        spec.ny = args.ny
    if args.max_iters is not None:
        spec.max_iters = args.max_iters
    cfg = paper_descent(spec)
    snapshots = _parse_snapshots(args.snapshots) or DEFAULT_SNAPSHOTS
    return _run_recovery(spec, cfg, Path(args.out), args.format, args.plots, snapshots)


def _parse_snapshots(text: str | None):
    if not text:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise SpecValidationError(f"bad --snapshots list {text!r}: {exc}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--snapshots", default=None,
                   help="comma-separated iteration numbers to snapshot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellinv",
                                     description="elliptic coefficient recovery toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fwd = sub.add_parser("forward", help="generate measured data for a spec")
    p_fwd.add_argument("--spec", required=True, help="experiment spec JSON file")
    _add_common(p_fwd)
    p_fwd.add_argument("--plots", action="store_true", default=False,
                       help="also render figures")
    p_fwd.set_defaults(func=cmd_forward)

    p_rec = sub.add_parser("recover", help="run a coefficient recovery")
    p_rec.add_argument("--spec", required=True, help="experiment spec JSON file")
    p_rec.add_argument("--descent", default=None, help="descent config JSON file")
    _add_common(p_rec)
    p_rec.add_argument("--no-plots", dest="plots", action="store_false", default=True)
    p_rec.set_defaults(func=cmd_recover)

    p_rep = sub.add_parser("reproduce", help="run a built-in experiment 1-4")
    p_rep.add_argument("example", type=int, choices=(1, 2, 3, 4))
    _add_common(p_rep)
    p_rep.add_argument("--nx", type=int, default=None)
    p_rep.add_argument("--ny", type=int, default=None)
    p_rep.add_argument("--max-iters", type=int, default=None)
    p_rep.add_argument("--no-plots", dest="plots", action="store_false", default=True)
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpecValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
