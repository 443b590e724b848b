"""Discretisation benchmarks: 2D convergence, sharp layers and the three-segment network.

Usage: python scripts/run_benchmarks.py [outdir]
Writes CSV tables and VTK layer fields under ``outdir`` (default results/benchmarks).
"""
import sys
import time
from pathlib import Path

from thermosyphon import benchmarks as bm
from thermosyphon.io import write_csv, write_vtk_cells


def main(out="results/benchmarks"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    for kind in ("sg", "upwind"):
        t0 = time.perf_counter()
        table = bm.convergence2d(kind)
        print(f"\n== manufactured solution, {kind} ({time.perf_counter() - t0:.1f} s)")
        print(table.format())
        rows = [[a, N, e] for a, errs in table.errors.items() for N, e in zip(table.Ns, errs)]
        write_csv(out / f"convergence_{kind}.csv", ["alpha", "N", "error_max"], rows)

    print("\n== layer problems, alpha = 1e-6, N = 64")
    for case in ("boundary", "interior"):
        for kind in ("sg", "upwind"):
            r = bm.layers2d(case, kind)
            print(f"{case:9s} {kind:7s} range [{r.u.min(): .3e}, {r.u.max(): .3e}] "
                  f"overshoot {r.overshoot:.2e} {'ok' if r.passed else 'VIOLATED'}")
            write_vtk_cells(out / f"layers_{case}_{kind}.vtk", r.grid, {"u": r.u}, title=f"{case} {kind}")

    for eps in (1.0, 1.0 / 50):
        print(f"\n== three-segment network, eps = {eps:g}")
        table = bm.network_test(eps)
        print(table.format())
        rows = [[h, e["u_H1"], e["J_L2"], e["J_rel_max"], w]
                for h, e, w in zip(table.hs, table.errors, table.omega_discrete)]
        write_csv(out / f"network_eps{eps:g}.csv", ["h", "u_H1", "J_L2", "J_rel_max", "omega_h"], rows)
        prof = bm.network_profile(1.0 / 16, eps)
        write_csv(out / f"network_profile_eps{eps:g}.csv", ["segment", "s", "u"],
                  [[seg, s, u] for seg, (ss, uu) in prof.items() for s, u in zip(ss, uu)])


if __name__ == "__main__":
    main(*sys.argv[1:])
