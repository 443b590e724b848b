"""Output writers: legacy VTK cell fields, CSV profiles/histories and the run report.

All numbers are written with ``%.17g`` so repeated runs of the same scenario
produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coupling import CondenserSetup, CoupledState, sample_wall_to_network
from .mesh2d import StructuredGrid2D

FMT = "%.17g"


def _num(v) -> str:
    return FMT % float(v)


def write_vtk_cells(path: str | Path, grid: StructuredGrid2D, fields: dict[str, np.ndarray],
                    title: str = "cell fields") -> Path:
    """Legacy ASCII VTK ``RECTILINEAR_GRID`` with one scalar per cell and field."""
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET RECTILINEAR_GRID", f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
             f"X_COORDINATES {grid.nx + 1} double", " ".join(map(_num, grid.xn)),
             f"Y_COORDINATES {grid.ny + 1} double", " ".join(map(_num, grid.yn)),
             "Z_COORDINATES 1 double", "0", f"CELL_DATA {grid.nel}"]
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.nel,):
            raise ValueError(f"field {name!r} has shape {values.shape}, expected ({grid.nel},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        # cell order x-fastest matches k = i + nx * j
        lines += [" ".join(map(_num, row)) for row in values.reshape(grid.ny, grid.nx)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else _num(v))
                        for v in row])
    return path


def read_csv(path: str | Path) -> dict[str, np.ndarray | list]:
    """Column dict; numeric columns become float arrays."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    cols = {h: [r[i] for r in rows[1:]] for i, h in enumerate(rows[0])}
    out = {}
    for h, v in cols.items():
        try:
            out[h] = np.array([float(x) for x in v])
        except ValueError:
            out[h] = v
    return out


def cell_rows(grid: StructuredGrid2D, fields: dict[str, np.ndarray]):
    for k in range(grid.nel):
        yield [k, *grid.centers[k], *(np.asarray(f)[k] for f in fields.values())]


def flow_ordered(values: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Reverse a segment's element values when its net flow runs against the segment direction."""
    return values[::-1] if np.sum(G) < 0 else values


def channel_profiles(setup: CondenserSetup, state: CoupledState) -> list[list]:
    """One row per 1D element: segment, arclength of the midpoint and the coolant state."""
    net, fl = setup.net, state.fluid
    if net is None or fl is None:
        return []
    T_w = sample_wall_to_network(state.T_w, state.mask)
    H_el = fl.element_H(net)
    rows = []
    for seg, elems in enumerate(net.seg_elems):
        s = net.node_arclength(seg)
        smid = 0.5 * (s[1:] + s[:-1])
        for i, k in enumerate(elems):
            rows.append([seg, net.names[seg] if net.names else f"seg{seg}", int(k), smid[i],
                         fl.G[k], fl.x[k], fl.T_c[k], fl.p[k], H_el[k], T_w[k]])
    return rows


PROFILE_HEADER = ["segment", "name", "element", "s", "G", "x", "T_c", "p", "H", "T_w"]
HISTORY_HEADER = ["iteration", "residual", "dT_a", "dT_w", "dT_c", "clamped", "subcooled"]


@dataclass
class RunReport:
    scenario: str
    converged: bool
    iterations: int
    mean_panel_temperature: float
    panel_T_min: float
    panel_T_max: float
    air_T_min: float
    air_T_max: float
    air_outlet_mean: float
    channels: list = field(default_factory=list)
    history: list = field(default_factory=list)
    clamp_counts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, *, include_time: bool = True) -> str:
        d = self.to_dict()
        if not include_time:
            d.pop("wall_time")
        return json.dumps(d, indent=2, sort_keys=True, allow_nan=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def mean_panel_temperature(grid: StructuredGrid2D, T_w: np.ndarray) -> float:
    return float(np.average(T_w, weights=grid.areas))


def build_report(name: str, setup: CondenserSetup, state: CoupledState, message: str = "") -> RunReport:
    grid, net, fl = setup.grid, setup.net, state.fluid
    top = grid.side_edges(3)
    T_top = state.T_a[grid.edge_plus[top]]
    channels = []
    if net is not None and fl is not None:
        for seg, elems in enumerate(net.seg_elems):
            nm = net.names[seg] if net.names else f"seg{seg}"
            G = fl.G[elems]
            x = flow_ordered(fl.x[elems], G)
            channels.append({"segment": seg, "name": nm, "G_mean": float(np.mean(G)),
                             "mass_flow": float(np.mean(G) * net.seg_area[seg]),
                             "x_upstream": float(x[0]), "x_downstream": float(x[-1]),
                             "T_c_mean": float(np.mean(fl.T_c[elems]))})
    diag = {k: v for k, v in state.diagnostics.items() if k not in ("superheated", "subcooled")}
    return RunReport(
        scenario=name, converged=bool(state.converged), iterations=int(state.iterations),
        mean_panel_temperature=mean_panel_temperature(grid, state.T_w),
        panel_T_min=float(state.T_w.min()), panel_T_max=float(state.T_w.max()),
        air_T_min=float(state.T_a.min()), air_T_max=float(state.T_a.max()),
        air_outlet_mean=float(np.average(T_top, weights=grid.edge_length[top])),
        channels=channels, history=list(state.history),
        clamp_counts={"superheated": int(state.diagnostics.get("superheated", 0)),
                      "subcooled": int(state.diagnostics.get("subcooled", 0))},
        diagnostics=diag, wall_time=float(state.wall_time), message=message)


def write_run_outputs(outdir: str | Path, setup: CondenserSetup, state: CoupledState,
                      report: RunReport) -> dict[str, Path]:
    """Write ``fields.vtk``, ``fields.csv``, ``profiles.csv``, ``history.csv`` and ``report.json``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    grid = setup.grid
    cells = {"T_a": state.T_a, "T_w": state.T_w, "T_c": state.Tc_cell, "h_wc_star": state.hwc_star}
    paths = {
        "vtk": write_vtk_cells(out / "fields.vtk", grid, cells, title=f"{report.scenario} air/panel temperatures"),
        "fields": write_csv(out / "fields.csv", ["cell", "x", "y", *cells], cell_rows(grid, cells)),
        "profiles": write_csv(out / "profiles.csv", PROFILE_HEADER, channel_profiles(setup, state)),
        "history": write_csv(out / "history.csv", HISTORY_HEADER,
                             ([h[k] for k in HISTORY_HEADER] for h in state.history)),
    }
    (out / "report.json").write_text(report.to_json() + "\n")
    paths["report"] = out / "report.json"
    return paths
