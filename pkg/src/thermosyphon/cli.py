"""Command-line entry point.

Verbs: ``convergence2d``, ``layers2d``, ``networktest``, ``run``, ``sweep``.
Exit codes: 0 success, 2 configuration error, 3 non-convergence (or a failed
benchmark check), 4 numerical failure.  ``THERMOSYPHON_LOG_LEVEL`` sets the
log level (default ``WARNING``).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmarks as bm
from . import config as cf
from .coupling import run_staggered
from .errors import ConfigError, IterationError, NumericalError
from .io import build_report, write_csv, write_run_outputs, write_vtk_cells

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_NUMERICAL = 0, 2, 3, 4
log = logging.getLogger("thermosyphon")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# scenario handling ---------------------------------------------------------------

def scenario_from_args(args) -> cf.ScenarioConfig:
    if args.config:
        cfg = cf.load(args.config)
    else:
        cfg = cf.preset_config(args.preset or "deviceA")
    coupling = cfg.coupling
    if args.outer_tol is not None:
        coupling = dataclasses.replace(coupling, outer_tol=args.outer_tol)
    if args.inner_tol is not None:
        coupling = dataclasses.replace(coupling, inner2d_tol=args.inner_tol, inner1d_tol=args.inner_tol)
    if args.max_iter is not None:
        coupling = dataclasses.replace(coupling, outer_max_iter=args.max_iter)
    changes = {"coupling": coupling}
    if args.stabilization:
        changes["stabilization"] = args.stabilization
    if getattr(args, "G_tot", None) is not None:
        changes["coolant"] = dataclasses.replace(cfg.coolant, G_tot=args.G_tot)
    if args.out:
        changes["output_dir"] = args.out
    return dataclasses.replace(cfg, **changes).validate()


def run_scenario(cfg: cf.ScenarioConfig, outdir: str | Path | None = None):
    """Run one scenario and write its outputs; returns ``(report, exit_code)``."""
    outdir = Path(outdir or cfg.output_dir)
    setup = cf.build_setup(cfg)
    try:
        state = run_staggered(setup, cfg.coupling)
        code, msg = EXIT_OK, "converged"
    except IterationError as exc:
        if exc.report is None:
            raise
        state, code, msg = exc.report, EXIT_NOT_CONVERGED, str(exc)
    report = build_report(cfg.name, setup, state, msg)
    outdir.mkdir(parents=True, exist_ok=True)
    cf.save(cfg, outdir / "scenario.toml")
    write_run_outputs(outdir, setup, state, report)
    return report, code


def _sweep_job(payload):
    text, outdir = payload
    cfg = cf.loads(text)
    try:
        report, code = run_scenario(cfg, outdir)
    except IterationError as exc:
        return cfg.coolant.G_tot, float("nan"), EXIT_NOT_CONVERGED, str(exc)
    except NumericalError as exc:
        return cfg.coolant.G_tot, float("nan"), EXIT_NUMERICAL, str(exc)
    return cfg.coolant.G_tot, report.mean_panel_temperature, code, report.message


# verbs -------------------------------------------------------------------------------

def cmd_convergence2d(args) -> int:
    kinds = ["sg", "upwind"] if args.stabilization in (None, "both") else [args.stabilization]
    ok = True
    for kind in kinds:
        table = bm.convergence2d(kind, tuple(args.alphas), tuple(args.N))
        print(table.format())
        for a, order in table.orders.items():
            if kind == "sg":
                good = order >= 1.8 if a >= 1.0 else (0.8 <= order <= 1.2 if a <= 1e-4 else True)
            else:
                good = 0.8 <= order <= 1.2
            ok &= good
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            rows = [[a, N, e] for a, errs in table.errors.items() for N, e in zip(table.Ns, errs)]
            write_csv(Path(args.out) / f"convergence_{kind}.csv", ["alpha", "N", "error_max"], rows)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_layers2d(args) -> int:
    cases = ["boundary", "interior"] if args.case == "both" else [args.case]
    kinds = ["sg", "upwind"] if args.stabilization in (None, "both") else [args.stabilization]
    ok = True
    for case in cases:
        for kind in kinds:
            r = bm.layers2d(case, kind, N=args.N, alpha=args.alpha)
            status = "PASS" if r.passed else "FAIL"
            print(f"{case:9s} {kind:7s} min {r.u.min(): .6e} max {r.u.max(): .6e} "
                  f"bounds [{r.bounds[0]:g}, {r.bounds[1]:g}] overshoot {r.overshoot:.3e} {status}")
            ok &= r.passed
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                write_vtk_cells(Path(args.out) / f"layers_{case}_{kind}.vtk", r.grid, {"u": r.u},
                                title=f"{case} layer, {kind}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_networktest(args) -> int:
    ok = True
    for eps in args.eps:
        table = bm.network_test(eps, args.h or None)
        print(table.format())
        ok &= all(0.8 <= v <= 1.2 for k, v in table.orders.items() if k == "u_H1")
        if eps < 1.0:
            ok &= max(e["J_rel_max"] for e in table.errors) <= 1e-9
        prof = bm.network_profile(1.0 / 16, eps)
        mono = all(bm.profile_is_monotone(v) for _, v in prof.values())
        print(f"h = 1/16 profiles monotone: {mono}")
        ok &= mono
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            rows = [[seg, s, u] for seg, (ss, uu) in prof.items() for s, u in zip(ss, uu)]
            write_csv(Path(args.out) / f"network_profile_eps{eps:g}.csv", ["segment", "s", "u"], rows)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_run(args) -> int:
    cfg = scenario_from_args(args)
    report, code = run_scenario(cfg)
    print(f"{cfg.name}: {report.message}; {report.iterations} outer iterations, "
          f"mean panel T {report.mean_panel_temperature:.4f} K, "
          f"panel range [{report.panel_T_min:.3f}, {report.panel_T_max:.3f}] K, "
          f"energy mismatch {report.diagnostics.get('energy', {}).get('relative_mismatch', float('nan')):.2e}")
    print(f"outputs in {cfg.output_dir}")
    return code


def cmd_sweep(args) -> int:
    base = scenario_from_args(args)
    root = Path(base.output_dir)
    jobs = []
    for G in args.G:
        cfg = dataclasses.replace(base, coolant=dataclasses.replace(base.coolant, G_tot=G)).validate()
        jobs.append((cf.dumps(cfg), str(root / f"G_{G:g}")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    root.mkdir(parents=True, exist_ok=True)
    write_csv(root / "sweep.csv", ["G_tot", "mean_panel_T", "exit_code"], [r[:3] for r in results])
    for G, T, code, msg in results:
        print(f"G_tot {G:8.3f}  mean panel T {T:.6f} K  exit {code}  {msg}")
    return max((r[2] for r in results), default=EXIT_OK)


# parser ------------------------------------------------------------------------------

def _scenario_flags(p):
    p.add_argument("--config", help="scenario TOML file")
    p.add_argument("--preset", choices=sorted(cf.PRESETS), help="named preset (default deviceA)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stabilization", choices=["sg", "upwind"])
    p.add_argument("--outer-tol", type=float)
    p.add_argument("--inner-tol", type=float)
    p.add_argument("--max-iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermosyphon", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("convergence2d", help="manufactured-solution convergence study")
    p.add_argument("--stabilization", choices=["sg", "upwind", "both"], default="both")
    p.add_argument("--alphas", type=_floats, default=list(bm.ALPHAS))
    p.add_argument("--N", type=_ints, default=list(bm.NS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_convergence2d)

    p = sub.add_parser("layers2d", help="boundary/interior layer problems with bound check")
    p.add_argument("--case", choices=["boundary", "interior", "both"], default="both")
    p.add_argument("--stabilization", choices=["sg", "upwind", "both"], default="sg")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--alpha", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_layers2d)

    p = sub.add_parser("networktest", help="three-segment network against the exact solution")
    p.add_argument("--eps", type=_floats, default=[1.0, 1.0 / 50])
    p.add_argument("--h", type=_floats, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_networktest)

    p = sub.add_parser("run", help="coupled condenser run")
    _scenario_flags(p)
    p.add_argument("--G-tot", dest="G_tot", type=float)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="G_tot sweep of a scenario")
    _scenario_flags(p)
    p.add_argument("--G", type=_floats, default=[5.8, 8.0, 12.0, 16.0])
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("THERMOSYPHON_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IterationError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
