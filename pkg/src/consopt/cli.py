"""Command-line interface: validate, derive, solve, verify, compare.

Exit codes: 0 success, 2 validation failure, 3 max-iters, 4 numerical failure.
``validate`` itself exits 0 or 1.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .assembly import assemble
from .errors import BadParams, ConsoptError, CoverageError, NonFiniteState, ParseError, SingularLoop
from .executor import Schedule, run, verify_fixed_point
from .oracle import grid_solve, kkt_solve
from .partition import StateVector
from .problem import check_gradient_coupling
from .problem_file import parse_problem
from .recovery import recover, stationarity_report

EXIT_OK, EXIT_INVALID, EXIT_MAXITERS, EXIT_NUMERIC = 0, 2, 3, 4

_KKT_KINDS = {"quadratic", "linear", "source", "zero"}


def _fmt(x):
    return np.array2string(np.asarray(x), precision=6, suppress_small=True, max_line_width=100)


def _floats(v):
    return [float(x) for x in np.asarray(v).reshape(-1)]


def _load(path):
    try:
        return parse_problem(Path(path)), None
    except (ParseError, CoverageError, BadParams) as exc:
        return None, str(exc)


def cmd_validate(args) -> int:
    p, err = _load(args.file)
    if err:
        print(f"invalid: {err}", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    ok = True
    for k, (cr, idx) in enumerate(zip(p.crs, p.partition.cr_blocks)):
        samples = rng.uniform(-5, 5, size=(20, cr.dim))
        rep = check_gradient_coupling(cr, samples)
        status = "ok" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"CR {k} ({cr.kind}) indices {idx.tolist()}: gradient coupling {status} "
              f"(max rel. error {rep.rel_errors.max():.2e})")
    print(f"{'ok' if ok else 'failed'}: N={p.n}, K={p.partition.K}, L={p.partition.L}")
    return 0 if ok else 1


def cmd_derive(args) -> int:
    p, err = _load(args.file)
    if err:
        print(f"invalid: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        sg = assemble(p)
    except SingularLoop as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for l, sb in enumerate(sg.scattering):
        print(f"LI {l} ({sb.source_block.kind}) ports {p.partition.li_blocks[l].tolist()}:")
        print(_fmt(sb.g_matrix))
    for k, m in enumerate(sg.cr_maps):
        cr = p.crs[k]
        print(f"CR {k} ({cr.kind}) ports {p.partition.cr_blocks[k].tolist()}: {m.classification} [{m.kind}]")
    ra = sg.reduced_affine
    print(f"delayed ports: {sg.delay_ports.tolist()}  source ports: {sg.source_ports.tolist()}")
    print("G_hat:")
    print(_fmt(ra.G_hat))
    print(f"e_hat: {_fmt(ra.e_hat)}")
    return EXIT_OK


def _schedule(args) -> Schedule:
    mode = "asynchronous" if args.mode == "async" else "synchronous"
    return Schedule(mode=mode, update_prob=args.p, rng_seed=args.seed,
                    max_iters=args.max_iters, fixed_point_tol=args.tol)


def _solution_doc(sg, state, trace, schedule):
    sol = recover(sg, state)
    fp = verify_fixed_point(sg, state)
    return {
        "status": trace.status,
        "iterations": len(trace),
        "mode": schedule.mode,
        "seed": schedule.rng_seed,
        "primal_cost": float(sol.primal_cost),
        "dual_cost": float(sol.dual_cost),
        "gap": float(sol.gap),
        "a": _floats(sol.a_star),
        "b": _floats(sol.b_star),
        "y": _floats(sol.y_star),
        "c": _floats(state.c),
        "d": _floats(state.d),
        "max_transformed_residual": fp.max_transformed,
        "max_untransformed_residual": fp.max_untransformed,
    }


def _solve(p, args):
    schedule = _schedule(args)
    sg = assemble(p)
    state, trace = run(sg, schedule, snapshot_stride=getattr(args, "snapshots", 0) or 0)
    return sg, schedule, state, trace


def cmd_solve(args) -> int:
    p, err = _load(args.file)
    if err:
        print(f"invalid: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        sg, schedule, state, trace = _solve(p, args)
    except (SingularLoop, NonFiniteState) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    doc = _solution_doc(sg, state, trace, schedule)
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        with open(args.trace, "w") as fh:
            trace.to_csv(fh)
        if args.snapshots:
            snap = Path(args.trace).with_suffix(".snapshots.csv")
            with open(snap, "w") as fh:
                fh.write("iteration,port,c,d\n")
                for it, s in trace.snapshots.items():
                    for i in range(len(s)):
                        fh.write(f"{it},{i},{s.c[i]!r},{s.d[i]!r}\n")
    if trace.status == "converged":
        return EXIT_OK
    if trace.status == "max-iters":
        return EXIT_MAXITERS
    return EXIT_NUMERIC


def cmd_verify(args) -> int:
    p, err = _load(args.file)
    if err:
        print(f"invalid: {err}", file=sys.stderr)
        return EXIT_INVALID
    doc = yaml.safe_load(Path(args.state).read_text())
    try:
        state = StateVector(doc["c"], doc["d"])
    except (KeyError, TypeError, ConsoptError) as exc:
        print(f"invalid state file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if len(state) != p.n:
        print(f"invalid state file: {len(state)} ports, problem has {p.n}", file=sys.stderr)
        return EXIT_INVALID
    sg = assemble(p)
    fp = verify_fixed_point(sg, state)
    sol = recover(sg, state)
    rep = stationarity_report(sol, p)
    print(f"transformed residual:   {fp.max_transformed:.3e}")
    print(f"untransformed residual: {fp.max_untransformed:.3e}")
    print(f"stationarity residual:  {rep.max_residual:.3e}")
    print(f"flatness slope (min):   {rep.min_slope:.3f}")
    bound = 10 * args.tol
    ok = fp.max_residual <= bound and rep.max_residual <= bound and rep.min_slope >= 1.9
    print("ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_compare(args) -> int:
    p, err = _load(args.file)
    if err:
        print(f"invalid: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        sg, schedule, state, trace = _solve(p, args)
    except (SingularLoop, NonFiniteState) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sol = recover(sg, state)
    if {cr.kind for cr in p.crs} <= _KKT_KINDS:
        a_ref, b_ref = kkt_solve(p)
        dev_a = float(np.max(np.abs(sol.a_star - a_ref)))
        dev_b = float(np.max(np.abs(sol.b_star - b_ref)))
        print(f"oracle: kkt  status: {trace.status}  iterations: {len(trace)}")
        print(f"max |a - a_kkt| = {dev_a:.3e}")
        print(f"max |b - b_kkt| = {dev_b:.3e}")
        ok = dev_a <= 1e-6 and dev_b <= 1e-6
    else:
        a_ref = grid_solve(p, (args.grid_lo, args.grid_hi), args.grid_res)
        dev_a = float(np.max(np.abs(sol.a_star - a_ref)))
        print(f"oracle: grid (resolution {args.grid_res:g})  status: {trace.status}  iterations: {len(trace)}")
        print(f"max |a - a_grid| = {dev_a:.3e}")
        ok = dev_a <= args.grid_res
    if trace.status != "converged":
        return EXIT_MAXITERS if trace.status == "max-iters" else EXIT_NUMERIC
    return EXIT_OK if ok else EXIT_NUMERIC


def _add_run_flags(sp):
    sp.add_argument("--mode", choices=("sync", "async"), default="sync")
    sp.add_argument("--p", type=float, default=1.0, help="update probability per delay (async)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-iters", type=int, default=1_000_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="consopt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="partition and gradient-coupling checks")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("derive", help="print G matrices, CR classifications and source reduction")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_derive)

    sp = sub.add_parser("solve", help="run to a fixed point")
    sp.add_argument("file")
    _add_run_flags(sp)
    sp.add_argument("--trace", help="write per-iteration CSV here")
    sp.add_argument("--snapshots", type=int, default=0, help="state snapshot stride (needs --trace)")
    sp.add_argument("--out", help="write the solution here instead of stdout")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="check a saved state")
    sp.add_argument("file")
    sp.add_argument("--state", required=True)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("compare", help="solve and cross-check against a reference solver")
    sp.add_argument("file")
    _add_run_flags(sp)
    sp.add_argument("--grid-lo", type=float, default=-3.0)
    sp.add_argument("--grid-hi", type=float, default=3.0)
    sp.add_argument("--grid-res", type=float, default=1e-3)
    sp.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
