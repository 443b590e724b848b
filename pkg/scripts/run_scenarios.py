"""Run every shipped condenser preset and print a one-line summary per run.

Usage: python scripts/run_scenarios.py [outdir] [preset ...]
"""
import sys
from pathlib import Path

import numpy as np

from thermosyphon import config as cf
from thermosyphon.cli import run_scenario


def summary(report):
    chans = [c for c in report.channels if c["name"].startswith("channel")]
    G = " ".join(f"{c['G_mean']:.2f}" for c in chans)
    e = report.diagnostics.get("energy", {})
    return (f"{report.scenario:13s} {report.message:10s} it {report.iterations:3d}  "
            f"T_w mean {report.mean_panel_temperature:.3f} K range {report.panel_T_max - report.panel_T_min:.3f} K  "
            f"air out {report.air_outlet_mean:.3f} K  Q {e.get('Q_network', np.nan):.4f} W  "
            f"time {report.wall_time:.1f} s\n    channel G (bottom to top): {G}")


def main(out="results/scenarios", *presets):
    for name in presets or sorted(cf.PRESETS):
        cfg = cf.preset_config(name)
        report, _ = run_scenario(cfg, Path(out) / name)
        print(summary(report))


if __name__ == "__main__":
    main(*sys.argv[1:])
