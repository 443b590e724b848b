"""Mean panel temperature versus total coolant mass flux, and the effect of gravity.

Usage: python scripts/sweep_mass_flux.py [outdir]

The first table sweeps G_tot on deviceA.  The second compares the channel
mass-flux split of the 11-channel horizontal panel with and without the
hydrostatic term in the momentum balance.
"""
import dataclasses
import sys
from pathlib import Path

import numpy as np

from thermosyphon import config as cf
from thermosyphon.cli import run_scenario
from thermosyphon.io import write_csv

G_VALUES = (5.8, 8.0, 12.0, 16.0)


def main(out="results/sweep"):
    out = Path(out)
    base = cf.preset_config("deviceA")
    rows = []
    for G in G_VALUES:
        cfg = dataclasses.replace(base, coolant=dataclasses.replace(base.coolant, G_tot=G)).validate()
        report, code = run_scenario(cfg, out / f"G_{G:g}")
        rows.append([G, report.mean_panel_temperature, report.iterations, code])
        print(f"G_tot {G:6.2f}  mean panel T {report.mean_panel_temperature:.6f} K  "
              f"({report.iterations} iterations, exit {code})")
    write_csv(out / "sweep.csv", ["G_tot", "mean_panel_T", "iterations", "exit_code"], rows)

    print("\nhorizontal11 channel mass flux, bottom to top [kg/(m^2 s)]")
    for label, grav in (("gravity", (0.0, -9.81)), ("no gravity", (0.0, 0.0))):
        cfg = dataclasses.replace(cf.preset_config("horizontal11"), gravity=grav)
        cfg = dataclasses.replace(cfg, coupling=dataclasses.replace(cfg.coupling, outer_max_iter=400)).validate()
        report, code = run_scenario(cfg, out / f"horizontal11_{label.replace(' ', '_')}")
        G = np.array([c["G_mean"] for c in report.channels if c["name"].startswith("channel")])
        print(f"{label:10s} ({report.iterations} it, exit {code}): " + " ".join(f"{g:7.2f}" for g in G))


if __name__ == "__main__":
    main(*sys.argv[1:])
