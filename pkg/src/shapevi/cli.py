"""Command line entry points.

    shapevi optimize        --config PATH --out DIR
    shapevi check-gradient  --config PATH [--n-directions N] [--seed N]
    shapevi verify-calculus
    shapevi solve-state     --config PATH --out DIR

Every command parses and builds its problem before touching ``--out``, so a
bad config leaves no files behind. Exit status 0 means success, 1 a failed
check, 2 an invalid config or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .adjoint_shape import PARTS, fd_check_shape_gradient
from .config import build, dump_config, parse_config
from .errors import ShapeVIError
from .hadamard_calc import run_calculus_suite
from .io import state_fields, write_vtk
from .mesh import write_mesh
from .optimizer import optimize
from .problem import admissible_directions

log = logging.getLogger("shapevi")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _wrong_max(x, v):
    # deliberately swaps the x = 0 branch, for testing the suite itself
    if x > 0:
        return v
    if x < 0:
        return 0.0
    return min(0.0, v)


def _load(args):
    spec = parse_config(args.config)
    return spec, build(spec, mode=args.mode)


def _prepare_out(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_optimize(args) -> int:
    spec, built = _load(args)
    cfg = spec.optimizer
    if args.max_iters is not None:
        cfg.max_outer_iters = args.max_iters
    out = _prepare_out(args.out)
    mesh, trace = optimize(built.problem, built.mesh, cfg)
    trace.write_csv(os.path.join(out, "trace.csv"))
    ev = built.problem.evaluate(mesh, gradient=True)
    pts, cells = state_fields(mesh, ev.state, ev.state.phi, built.problem.target.value(mesh.nodes),
                              {"adjoint": ev.adjoint.v, "shape_gradient": ev.gradient.g})
    write_vtk(os.path.join(out, "final.vtk"), mesh, pts, cells)
    write_mesh(mesh, os.path.join(out, "final_mesh.txt"))
    with open(os.path.join(out, "config.yaml"), "w") as fh:
        fh.write(dump_config(spec))
    last = trace.records[-1]
    print(f"iterations {last.iteration}  J {trace.records[0].objective:.6e} -> {last.objective:.6e}  "
          f"stationarity {trace.records[0].stationarity:.3e} -> {last.stationarity:.3e}  "
          f"mean radius {last.mean_radius:.4f}  ({trace.reason})")
    return EXIT_OK


def cmd_check_gradient(args) -> int:
    spec, built = _load(args)
    fd = spec.fd_check
    n = fd.n_directions if args.n_directions is None else args.n_directions
    problem, mesh = built.problem, built.mesh
    ev = problem.evaluate(mesh, corrupt=args.corrupt_part)
    rng = np.random.default_rng(args.seed)
    dirs = admissible_directions(mesh, ev.state, rng, n, fd.n_modes, fd.scale, fd.cutoff_width)
    print(f"{'dir':>4} {'<g,V>':>14} {'slope':>7} {'rel err':>10}   errors")
    ok = True
    rows = []
    for k, V in enumerate(dirs):
        r = fd_check_shape_gradient(problem, mesh, V, fd.t_steps, gradient=ev.gradient)
        good = r.slope >= 0.9 and r.relative_error <= 1e-2
        ok &= good
        errs = " ".join(f"{e:.2e}" for e in r.errors)
        print(f"{k:>4} {r.pairing:>14.6e} {r.slope:>7.3f} {r.relative_error:>10.2e}   {errs}  {'ok' if good else 'FAIL'}")
        rows.append((k, r.pairing, r.slope, r.relative_error, *r.errors))
        for note in r.notes:
            print(f"     note: {note}")
    if args.out:
        out = _prepare_out(args.out)
        with open(os.path.join(out, "gradient_check.csv"), "w") as fh:
            fh.write("direction,pairing,slope,relative_error," + ",".join(f"err_t{t:g}" for t in fd.t_steps) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) if i else str(v) for i, v in enumerate(row)) + "\n")
    print("gradient check", "passed" if ok else "FAILED", f"({len(dirs)} directions)")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_calculus(args) -> int:
    impl = _wrong_max if args.inject_fault else None
    results = run_calculus_suite(impl, seed=args.seed) if impl else run_calculus_suite(seed=args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  instances={r.instances:<5d} "
              f"max_error={r.max_error:.2e}  {r.detail}")
    ok = all(r.passed for r in results)
    print("calculus suite", "passed" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve_state(args) -> int:
    spec, built = _load(args)
    ev = built.problem.evaluate(built.mesh, gradient=False)
    out = _prepare_out(args.out)
    pts, cells = state_fields(built.mesh, ev.state, ev.state.phi, built.problem.target.value(built.mesh.nodes),
                              {"adjoint": ev.adjoint.v})
    write_vtk(os.path.join(out, "state.vtk"), built.mesh, pts, cells)
    s = ev.state
    print(f"nodes {built.mesh.n_nodes}  active {ev.n_active}  PDAS iterations {s.iterations}  "
          f"complementarity {s.comp_residual:.2e}  J {ev.objective:.6e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapevi", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        if out:
            sp.add_argument("--out", required=out == "required", metavar="DIR", default=None)
        sp.add_argument("--seed", type=int, default=0, metavar="N")
        sp.add_argument("--mode", choices=("paper-exact", "limit"), default=None,
                        help="adjoint variant (default: from config)")

    sp = sub.add_parser("optimize", help="run the shape descent")
    common(sp, out="required")
    sp.add_argument("--max-iters", type=int, default=None, help="override optimizer.max_outer_iters")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("check-gradient", help="finite-difference check of the shape gradient")
    common(sp)
    sp.add_argument("--n-directions", type=int, default=None)
    sp.add_argument("--corrupt-part", choices=PARTS, default=None, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_check_gradient)

    sp = sub.add_parser("verify-calculus", help="property checks of the semiderivative rules")
    common(sp, config=False, out=False)
    sp.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify_calculus)

    sp = sub.add_parser("solve-state", help="solve the obstacle problem once and export it")
    common(sp, out="required")
    sp.set_defaults(func=cmd_solve_state)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ShapeVIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
