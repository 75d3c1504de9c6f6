"""Command-line driver: ``vem patch|converge|stabsweep|cook|solve``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import benchmarks as bm
from . import meshgen
from .assembly import SolverError
from .element import ElementError
from .mesh import MeshError, load_mesh
from .postproc import (CONVERGENCE_COLUMNS, COOK_COLUMNS, STABSWEEP_COLUMNS, export_csv,
                       export_vtk)

logger = logging.getLogger("polyvem")

PATCH_COLUMNS = ("test", "k", "max_deviation", "tolerance", "passed")
SOLVE_COLUMNS = ("level", "h", "ndofs", "D1", "D2")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {v}")
    return v


def _float_list(text: str) -> list:
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("alpha0 values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vem", description="Arbitrary-order virtual elements for 2D linear elasticity.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")
    common.add_argument("-v", "--verbose", action="store_true", help="echo the log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("patch", parents=[common], help="constant-stress patch tests")
    p.add_argument("--test", choices=("1a", "1b"), required=True)
    p.add_argument("--k", type=_positive_int, default=1)

    p = sub.add_parser("converge", parents=[common], help="convergence study with error norms")
    p.add_argument("--test", choices=("2a", "2b"), required=True)
    p.add_argument("--mesh", choices=sorted(meshgen.FAMILIES), default=None,
                   help="mesh family (default: squares for 2a, hexagons for 2b)")
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--levels", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--solver", choices=("direct", "cg"), default="direct")
    p.add_argument("--jobs", type=_positive_int, default=1, help="levels solved in parallel")

    p = sub.add_parser("stabsweep", parents=[common], help="sensitivity to the stabilization factor")
    p.add_argument("--mesh", choices=sorted(meshgen.FAMILIES), required=True)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--alpha0", type=_float_list, default=list(bm.DEFAULT_ALPHA0),
                   help="comma-separated factors; tau = alpha0 / 2")
    p.add_argument("--n", type=_positive_int, default=bm.STABSWEEP_RESOLUTION,
                   help="mesh resolution")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("cook", parents=[common], help="Cook's membrane tip displacement")
    p.add_argument("--mesh", choices=bm.COOK_FAMILIES, default="quads")
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--levels", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("solve", parents=[common], help="solve a problem described by files")
    p.add_argument("--mesh", type=Path, required=True, help="mesh file")
    p.add_argument("--problem", type=Path, required=True, help="JSON problem configuration")
    return parser


def _setup_logging(out: Path, verbose: bool) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("polyvem")
    root.setLevel(logging.INFO)
    root.addHandler(handler)
    if verbose:
        echo = logging.StreamHandler(sys.stderr)
        echo.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(echo)
    return handler


def _teardown_logging() -> None:
    root = logging.getLogger("polyvem")
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()


def cmd_patch(args) -> int:
    res = bm.run_patch(args.test, args.k)
    export_vtk(res.solution.mesh, res.solution, args.out / "solution_0.vtk")
    export_csv([{"test": res.test, "k": res.k, "max_deviation": res.max_deviation,
                 "tolerance": res.tolerance, "passed": int(res.passed)}],
               args.out / "results.csv", PATCH_COLUMNS)
    status = "PASS" if res.passed else "FAIL"
    msg = (f"patch {res.test} k={res.k}: max relative stress deviation {res.max_deviation:.3e} "
           f"over {res.n_samples} points (tolerance {res.tolerance:.0e}) {status}")
    logger.info(msg)
    print(msg)
    return EXIT_OK if res.passed else EXIT_FAILED


def cmd_converge(args) -> int:
    res = bm.run_convergence(args.test, args.mesh, args.k, args.levels, seed=args.seed,
                             method=args.solver, jobs=args.jobs, vtk_dir=args.out)
    export_csv([r.row() for r in res.levels], args.out / "results.csv", CONVERGENCE_COLUMNS)
    for r in res.levels:
        print(f"level {r.level}: h={r.h:.5g} ndofs={r.ndofs} D1={r.D1:.4e} D2={r.D2:.4e}")
    msg = (f"converge {res.test} {res.family} k={res.k}: slope D1 = {res.slope_D1:.3f}, "
           f"slope D2 = {res.slope_D2:.3f}")
    logger.info(msg)
    print(msg)
    return EXIT_OK


def cmd_stabsweep(args) -> int:
    res = bm.run_stabsweep(args.mesh, args.k, args.alpha0, n=args.n, seed=args.seed,
                           vtk_dir=args.out)
    export_csv(res.rows, args.out / "results.csv", STABSWEEP_COLUMNS)
    for r in res.rows:
        print(f"alpha0={r['alpha0']:g}: D1={r['D1']:.4e}")
    msg = f"stabsweep {res.family} k={res.k}: max(D1)/min(D1) = {res.ratio:.3f}"
    logger.info(msg)
    print(msg)
    return EXIT_OK


def cmd_cook(args) -> int:
    res = bm.run_cook(args.mesh, args.k, args.levels, seed=args.seed, jobs=args.jobs,
                      vtk_dir=args.out)
    export_csv([r.row() for r in res.levels], args.out / "results.csv", COOK_COLUMNS)
    for r in res.levels:
        print(f"level {r.level}: h={r.h:.5g} ndofs={r.ndofs} vA={r.vA:.6f}")
    if len(res.levels) >= 3:
        msg = f"cook {res.family} k={res.k}: extrapolated vA = {res.limit:.6f}"
    else:
        msg = f"cook {res.family} k={res.k}: finest vA = {res.values[-1]:.6f}"
    logger.info(msg)
    print(msg)
    return EXIT_OK


def cmd_solve(args) -> int:
    mesh = load_mesh(args.mesh)
    config = bm.load_problem_config(args.problem, mesh)
    sol, d1, d2 = bm.solve_config(mesh, config)
    export_vtk(mesh, sol, args.out / "solution_0.vtk")
    export_csv([{"level": 0, "h": float(mesh.h_max), "ndofs": sol.n_dofs, "D1": d1, "D2": d2}],
               args.out / "results.csv", SOLVE_COLUMNS)
    msg = f"solved k={config.k} on {mesh.n_cells} cells, {sol.n_dofs} dofs"
    if d1 is not None:
        msg += f"; D1={d1:.4e} D2={d2:.4e}"
    logger.info(msg)
    print(msg)
    return EXIT_OK


COMMANDS = {"patch": cmd_patch, "converge": cmd_converge, "stabsweep": cmd_stabsweep,
            "cook": cmd_cook, "solve": cmd_solve}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging(args.out, args.verbose)
    except OSError as exc:
        print(f"vem: cannot use output directory {args.out}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logger.info("command: %s", " ".join(sys.argv if argv is None else ["vem", *argv]))
    try:
        return COMMANDS[args.command](args)
    except (MeshError, bm.ConfigError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        print(f"vem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, ElementError) as exc:
        logger.error("%s", exc)
        print(f"vem: solve failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    finally:
        _teardown_logging()


if __name__ == "__main__":
    sys.exit(main())
