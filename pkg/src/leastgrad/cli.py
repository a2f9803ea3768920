"""Command line entry point.

Exit status: 0 success, 2 a result was produced but did not meet its target
(solver not converged, barrier violated, property suite failed), 1 bad input.
Failures print one line ``error: <kind>: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from leastgrad import io

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNMET = 2


class CliError(Exception):
    def __init__(self, kind: str, message: str, status: int = EXIT_INPUT):
        super().__init__(message)
        self.kind = kind
        self.status = status


def _out_dir(args, bundle=None) -> Path:
    if args.out:
        d = Path(args.out)
    elif bundle is not None and bundle.out is not None:
        d = bundle.out
    else:
        d = Path("out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_solve(args) -> int:
    from leastgrad.solver import solve_least_gradient

    if not args.bundle:
        raise CliError("input", "--bundle is required")
    b = io.load_bundle(args.bundle)
    u, rep = solve_least_gradient(b.grid, b.metric, b.boundary, b.solver)
    out = _out_dir(args, b)
    io.write_field(out / "solution.csv", b.grid, u)
    io.write_json(out / "report.json", rep.to_dict())
    print(f"objective {rep.objective:.10g} gap {rep.gap:.3e} iterations {rep.iterations} "
          f"converged {str(rep.converged).lower()}")
    return EXIT_OK if rep.converged else EXIT_UNMET


def _gaussian_sigma(grid, spec: dict) -> np.ndarray:
    x, y = grid.centers
    cx, cy = spec.get("center", (0.5, 0.5))
    amp = float(spec.get("amplitude", 0.5))
    width = float(spec.get("width", 0.1))
    return 1.0 + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2))


def cmd_cdii(args) -> int:
    from leastgrad.cdii import PipelineError, cdii_pipeline
    from leastgrad.grid import Grid

    if args.bundle:
        b = io.load_bundle(args.bundle, need=("grid", "sigma_true", "voltage"))
        grid = b.grid
        st = b.raw["sigma_true"]
        if isinstance(st, dict):
            sigma = _gaussian_sigma(grid, st.get("gaussian", st))
        else:
            sigma = io.scalar_or_field(st, b.base, grid, "sigma_true")
        if not isinstance(b.raw["voltage"], str):
            raise CliError("input", "voltage: expected a boundary CSV path")
        f = io.read_boundary(b.base / b.raw["voltage"], grid)
        cfg = b.solver
    else:
        from leastgrad.solver import SolverConfig

        b = None
        grid = Grid.box(args.n)
        sigma = _gaussian_sigma(grid, {})
        f = grid.boundary_faces().centers(grid)[:, 0].copy()
        cfg = SolverConfig(tol=1e-5, max_iters=50000)
    try:
        sigma_rec, rep = cdii_pipeline(grid, sigma, f, cfg)
    except PipelineError as exc:
        raise CliError(f"cdii.{exc.stage}", str(exc.cause), EXIT_INPUT if exc.stage == "forward" else EXIT_UNMET)
    out = _out_dir(args, b)
    io.write_field(out / "sigma_rec.csv", grid, sigma_rec)
    io.write_json(out / "report.json", rep.to_dict())
    print(f"sigma_error {rep.sigma_error:.6e} u_error {rep.u_error:.6e} floor_count {rep.floor_count}")
    converged = rep.solve is None or rep.solve.converged
    return EXIT_OK if converged and not rep.floor_excessive else EXIT_UNMET


def cmd_counterexample(args) -> int:
    from leastgrad.analysis.counterexample import (CounterexampleSpec, counterexample_family,
                                                   counterexample_fields, counterexample_grid,
                                                   nonuniqueness_demo)
    from leastgrad.solver import SolverConfig

    try:
        spec = CounterexampleSpec(theta=args.theta)
    except ValueError as exc:
        raise CliError("input", f"theta: {exc}") from exc
    if not 0.0 <= args.sigma <= 1.0:
        raise CliError("input", f"sigma must lie in [0, 1], got {args.sigma}")
    grid = counterexample_grid(spec, args.n)
    a, J = counterexample_fields(spec, grid)
    u = counterexample_family(spec, args.sigma, grid)
    sigmas = sorted({0.0, 0.5, 1.0, float(args.sigma)})
    table = nonuniqueness_demo(spec, grid, sigmas, solve=not args.no_solve,
                               cfg=SolverConfig(tol=1e-4, max_iters=50000))
    out = _out_dir(args)
    io.write_field(out / "a.csv", grid, a)
    io.write_vector_field(out / "J.csv", grid, J)
    io.write_field(out / "u_sigma.csv", grid, u)
    d = table.to_dict()
    d.update({"theta": spec.theta, "n": args.n, "sigma": float(args.sigma), "z_scale": spec.eps,
              "grid": io.grid_to_dict(grid)})
    io.write_json(out / "table.json", d)
    ok = table.spread <= table.tolerance
    if table.solver_objective is not None:
        ok = ok and table.solver_objective <= min(table.objectives) + table.tolerance
    print(f"common objective {table.common_objective:.10g} spread {table.spread:.3e} "
          f"tolerance {table.tolerance:.3e} control gap {table.control_gap:.3e}")
    return EXIT_OK if ok else EXIT_UNMET


def _levelset_from(desc: dict, base: Path):
    from leastgrad.analysis.barrier import LevelSet

    kind = desc.get("kind")
    if kind == "disk":
        return LevelSet.disk(float(desc.get("radius", 1.0)), tuple(desc.get("center", (0.0, 0.0))))
    if kind == "cassini":
        return LevelSet.cassini(float(desc.get("c", 1.0)), float(desc.get("b", 1.05)))
    if kind == "samples":
        path = base / desc["file"]
        if not path.is_file():
            raise io.InputError(str(path), "file not found")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
        if xs.size * ys.size != data.shape[0]:
            raise io.InputError(str(path), "samples must cover a full tensor grid")
        vals = np.empty((xs.size, ys.size))
        vals[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
        return LevelSet.from_samples(xs, ys, vals)
    raise io.InputError("levelset.kind", f"unknown level set {kind!r}; use disk, cassini or samples")


def cmd_barrier(args) -> int:
    from leastgrad.analysis.barrier import LevelSetError, barrier_indicator, box_around
    from leastgrad.metric import Riemannian, WeightedIsotropic

    if args.bundle:
        b = io.load_bundle(args.bundle, need=("levelset",))
        raw, base = b.raw, b.base
    else:
        b = None
        raw, base = {"levelset": {"kind": args.shape}}, Path(".")
    ls = _levelset_from(raw["levelset"], base)
    h = float(raw.get("h", args.h))
    extent = float(raw.get("extent", 1.5 if raw["levelset"].get("kind") == "cassini" else 1.0))
    grid = box_around(extent, h)
    mdesc = raw.get("metric", {"kind": "isotropic", "a": 1.0})
    a = np.full(grid.shape, float(mdesc.get("a", 1.0)))
    if mdesc.get("kind", "isotropic") == "riemannian":
        s = np.broadcast_to(np.asarray(mdesc["sigma0"], dtype=float), grid.shape + (2, 2)).copy()
        metric = Riemannian(a, s)
    else:
        metric = WeightedIsotropic(a)
    try:
        res = barrier_indicator(grid, metric, ls, raw.get("band_width"))
    except LevelSetError as exc:
        raise CliError("barrier", str(exc)) from exc
    out = _out_dir(args, b)
    x, y = grid.centers
    with open(out / "indicator.csv", "w") as fh:
        fh.write("i,j,x,y,value\n")
        for i, j, v in res.band_values():
            fh.write(f"{i},{j},{float(x[i, j])!r},{float(y[i, j])!r},{v!r}\n")
    io.write_json(out / "barrier.json", {
        "minimum": res.minimum, "argmin": list(res.argmin), "h": h, "satisfied": res.satisfied,
        "band_cells": int(res.band.sum()),
    })
    print(f"minimum indicator {res.minimum:.6g}")
    print("barrier condition: " + ("SATISFIED" if res.satisfied else "VIOLATED"))
    return EXIT_OK if res.satisfied else EXIT_UNMET


def cmd_check(args) -> int:
    from leastgrad.suites import SUITES, run_suite

    if args.suite not in SUITES:
        raise CliError("input", f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}")
    res = run_suite(args.suite, args.seed, args.count)
    print(res.table())
    if args.out:
        io.write_json(_out_dir(args) / f"check_{args.suite}.json", res.to_dict())
    if not res.ok:
        raise CliError("check", f"suite {args.suite} failed", EXIT_UNMET)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error status and a one-line reason."""

    def error(self, message):
        self.exit(EXIT_INPUT, f"error: usage: {message}\n")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="leastgrad", description="Weighted and anisotropic least gradient problems.")
    ap.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a bundle's least gradient problem")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("cdii", help="conductivity recovery round trip")
    p.add_argument("--bundle", help="bundle with grid, sigma_true and voltage (default: built-in demo)")
    p.add_argument("--n", type=int, default=64, help="demo grid size")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cdii)

    p = sub.add_parser("counterexample", help="calibrated family of minimisers")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--no-solve", action="store_true", help="skip the solver run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("barrier", help="barrier indicator on a boundary band")
    p.add_argument("--bundle", help="bundle with a levelset descriptor")
    p.add_argument("--shape", default="disk", choices=["disk", "cassini"])
    p.add_argument("--h", type=float, default=1.0 / 128)
    p.add_argument("--out")
    p.set_defaults(func=cmd_barrier)

    p = sub.add_parser("check", help="run a seeded property suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--count", type=int, help="number of random cases (suite default otherwise)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.status
    except io.InputError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
