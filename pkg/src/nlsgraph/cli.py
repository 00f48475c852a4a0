"""Command-line entry point: ``nlsgraph {solve,sweep,uniq,nonuniq,verify}``.

Exit codes: 0 success, 1 numerical failure, 2 usage error. Diagnostics of a
failure are printed as JSON on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytic, io
from . import graph_core as gc
from . import solver as S
from .errors import InvalidInputError, InvalidParameterError, NLSGraphError, RejectedInputError, UnsupportedError

USAGE_ERRORS = (InvalidParameterError, InvalidInputError, RejectedInputError, UnsupportedError)


class _Usage(Exception):
    pass


def parse_grid(text: str) -> np.ndarray:
    """``a:b:h`` -> a, a+h, ..., b (inclusive, rounded to the step)."""
    try:
        a, b, h = (float(x) for x in text.split(":"))
    except ValueError:
        raise _Usage(f"mass grid must be a:b:h, got {text!r}") from None
    if not h > 0 or b < a:
        raise _Usage("mass grid needs h > 0 and b >= a")
    n = int(round((b - a) / h)) + 1
    return np.round(a + h * np.arange(n), 12)


def _graph(args):
    return gc.parse_graph_spec(args.graph, density=args.density)


def _config(args, **extra) -> S.SolverConfig:
    return S.SolverConfig(p=args.p, density=args.density, tol_g=args.tol_g, max_iter=args.max_iter, seed=args.seed, **extra)


def _emit(args, doc, outputs, manifest):
    text = io.json_text(doc)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = io.write_json(out / f"{args.command}.json", doc)
        outputs.append(str(path))
        manifest.outputs = outputs
        manifest.finish()
        manifest.write(out / "manifest.json")
    sys.stdout.write(text)


def _manifest(args, graph=None, config=None):
    m = io.RunManifest(
        command=" ".join([args.command] + args.argv_tail),
        config=(config.to_dict() if config is not None else {}),
        seed=args.seed,
        version=__version__,
        graph=graph.to_json_dict() if graph is not None else None,
    )
    m.start()
    return m


def cmd_solve(args):
    g = _graph(args)
    cfg = _config(args)
    if args.max_on and args.max_at:
        raise _Usage("use at most one of --max-on and --max-at")
    constraint = S.MassOnly()
    if args.max_on:
        constraint = S.MassAndMaxOn(args.max_on)
    elif args.max_at:
        constraint = S.MassAndMaxAt(args.max_at)
    man = _manifest(args, g, cfg)
    res = S.minimize(g, args.mass, args.p, constraint=constraint, config=cfg, initial=args.start)
    doc = res.to_json_dict(include_arrays=False)
    io.validate(doc, "result")
    outputs = []
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        outputs.append(str(io.write_csv(Path(args.out) / "edges.csv", "edges", io.EDGE_COLUMNS, io.edge_rows(res))))
    _emit(args, doc, outputs, man)
    return 0 if res.converged else 1


def cmd_sweep(args):
    from .experiments.sweep import sweep_mu, sweep_summary

    g = _graph(args)
    cfg = _config(args)
    grid = parse_grid(args.mass_grid)
    man = _manifest(args, g, cfg)
    man.extra = {"grid": grid.tolist(), "starts": args.starts}
    rows = sweep_mu(g, args.p, grid, cfg, n_starts=args.starts)
    text = io.csv_text("sweep", io.SWEEP_COLUMNS, io.sweep_rows(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(text)
        man.outputs = [str(out / "sweep.csv")]
        man.extra["summary"] = sweep_summary(rows)
        man.finish()
        man.write(out / "manifest.json")
    sys.stdout.write(text)
    return 0 if all(r.converged for r in rows) else 1


def cmd_uniq(args):
    from .experiments.sweep import uniqueness_probe

    g = _graph(args)
    cfg = _config(args)
    man = _manifest(args, g, cfg)
    rep = uniqueness_probe(g, args.p, args.mass, cfg, K=args.starts)
    doc = rep.to_dict()
    outputs = []
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        rows = [{"run": i, "energy": e, "multiplier": m, "cluster_id": c}
                for i, (e, m, c) in enumerate(zip(rep.energies, rep.multipliers, rep.cluster_ids))]
        outputs.append(str(io.write_csv(Path(args.out) / "uniq.csv", "uniq", io.UNIQ_COLUMNS, rows)))
    _emit(args, doc, outputs, man)
    return 1 if rep.inconclusive else 0


def cmd_nonuniq(args):
    from .experiments.miranda import EPS_SCHEDULE, R_SCHEDULE, nonuniqueness_run

    cfg = _config(args)
    man = _manifest(args, None, cfg)
    rep = nonuniqueness_run(args.p, args.mass, args.N, cfg)
    doc = rep.to_dict()
    man.extra = {"r_schedule": list(R_SCHEDULE), "eps_schedule": list(EPS_SCHEDULE), "certificate": doc["certificate"]}
    _emit(args, doc, [], man)
    return 0 if rep.success else 1


# ---------------------------------------------------------------------- verify suites


def _check(lines, name, ok, detail):
    lines.append((bool(ok), f"{'PASS' if ok else 'FAIL'} {name}: {detail}"))


def verify_analytic():
    out = []
    th = analytic.theta(4.0)
    _check(out, "theta_4", abs(th - 1 / 96) < 1e-12, f"{th:.12g} vs 1/96 = {1 / 96:.12g}")
    _check(out, "mu_R", abs(analytic.MU_R - math.sqrt(3) * math.pi / 2) < 1e-15, f"{analytic.MU_R:.6f} (sqrt(3) pi / 2)")
    lam = analytic.soliton_multiplier(4.0, 1.0)
    _check(out, "lambda_4(1)", abs(lam - 1 / 16) < 1e-12, f"{lam:.12g} vs 1/16")
    for p in (3.0, 4.0, 5.0):
        a = analytic.soliton_multiplier(p, 1.0)
        b = analytic.soliton_multiplier_closed(p, 1.0)
        _check(out, f"multiplier closed form p={p:g}", abs(a - b) <= 1e-10 * b, f"{a:.12g} vs {b:.12g}")
        _, beta = analytic.exponents(p)
        ratio = analytic.level_Rplus(p, 1.0) / analytic.level_R(p, 1.0)
        _check(out, f"half-line level ratio p={p:g}", abs(ratio - 2 ** (2 * beta)) < 1e-12, f"{ratio:.12g}")
    return out


def verify_rearrange(n=20, seed=0):
    from . import rearrange as R

    rng = np.random.default_rng(seed)
    out = []
    g = gc.star(3, 1.0, density=20, truncation=3.0)
    worst_eq = worst_ps = 0.0
    for _ in range(n):
        u = gc.GraphFunction(g, np.abs(rng.normal(size=g.n_dof)))
        for re_ in (R.decreasing_rearrangement(u), R.symmetric_rearrangement(u)):
            for q in (2.0, 4.0):
                a, b = re_.integral(q), gc.exact_power_integral(u, q)
                worst_eq = max(worst_eq, abs(a - b) / b)
            worst_ps = max(worst_ps, re_.kinetic() - gc.kinetic(u))
    _check(out, "equimeasurability", worst_eq <= 1e-8, f"max rel err {worst_eq:.2e}")
    _check(out, "Polya-Szego", worst_ps <= 1e-8, f"max excess {worst_ps:.2e}")
    return out


def verify_solver():
    out = []
    cfg = S.SolverConfig(p=4.0, density=20, truncation="keep")
    res = S.minimize(gc.line(60.0, density=20), 1.0, config=cfg)
    _check(out, "line soliton level", abs(res.energy + 1 / 96) < 1e-4, f"{res.energy:.10f} vs {-1 / 96:.10f}")
    _check(out, "converged", res.converged, f"{res.iterations} iterations")
    hist = np.array(res.energy_history)
    inc = float(np.max(np.diff(hist))) if hist.size > 1 else 0.0
    _check(out, "monotone energy", inc <= 1e-14, f"max increase {inc:.2e}")
    _check(out, "Kirchhoff residual", res.kirchhoff_residual <= 1e-6, f"{res.kirchhoff_residual:.2e}")
    return out


SUITES = {"analytic": verify_analytic, "rearrange": verify_rearrange, "solver": verify_solver}


def cmd_verify(args):
    ok = True
    for ok_line, line in SUITES[args.suite]():
        print(line)
        ok &= ok_line
    return 0 if ok else 1


# ---------------------------------------------------------------------- parser


def _common(sp, mass=True):
    sp.add_argument("--p", type=float, default=4.0, help="nonlinearity exponent in (2, 6]")
    if mass:
        sp.add_argument("--mass", type=float, required=True, help="mass mu")
    sp.add_argument("--density", type=float, default=100.0, help="grid points per unit length")
    sp.add_argument("--tol-g", type=float, default=1e-8, dest="tol_g")
    sp.add_argument("--max-iter", type=int, default=20000, dest="max_iter")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="directory for result files and the run manifest")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlsgraph", description="NLS ground states on metric graphs")
    ap.add_argument("--version", action="version", version=f"nlsgraph {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="minimize the energy at fixed mass")
    sp.add_argument("--graph", required=True, help="graph JSON file or shorthand such as tadpole:1")
    _common(sp)
    sp.add_argument("--max-on", dest="max_on", help="force the sup onto this edge")
    sp.add_argument("--max-at", dest="max_at", help="force the sup onto this vertex")
    sp.add_argument("--start", type=int, default=None, help="multistart seed for the initial guess")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="ground level and multiplier over a mass grid")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--mass-grid", required=True, dest="mass_grid", help="a:b:h")
    sp.add_argument("--starts", type=int, default=4)
    _common(sp, mass=False)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("uniq", help="cluster multistart minimizers")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--starts", type=int, default=20)
    _common(sp)
    sp.set_defaults(func=cmd_uniq)

    sp = sub.add_parser("nonuniq", help="construct two ground states with different multipliers")
    sp.add_argument("--N", type=int, default=2, help="number of half-lines")
    _common(sp)
    sp.set_defaults(func=cmd_nonuniq)

    sp = sub.add_parser("verify", help="run a property suite and print pass/fail lines")
    sp.add_argument("suite", choices=sorted(SUITES))
    sp.set_defaults(func=cmd_verify, seed=None)
    return ap


def _fail(code, message, diagnostics=None):
    sys.stderr.write(io.json_text({"error": message, "diagnostics": diagnostics or {}}))
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv_tail = argv[1:]
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        return _fail(2, str(exc))
    except USAGE_ERRORS as exc:
        return _fail(2, str(exc), getattr(exc, "diagnostics", None))
    except NLSGraphError as exc:
        return _fail(1, str(exc), getattr(exc, "diagnostics", None))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
