import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermosyphon import config as cf
from thermosyphon.cli import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, main
from thermosyphon.coupling import CouplingConfig
from thermosyphon.errors import ConfigError
from thermosyphon.io import mean_panel_temperature, read_csv, write_csv, write_vtk_cells
from thermosyphon.mesh2d import build_grid

pos = st.floats(1e-3, 1e3, allow_nan=False)


@settings(max_examples=100)
@given(preset=st.sampled_from(sorted(cf.PRESETS)), nx=st.integers(1, 60), G=pos, h_wc=pos,
       T_a=st.floats(250.0, 300.0), dT=st.floats(1.0, 60.0), stab=st.sampled_from(["sg", "upwind"]),
       damping=st.floats(0.05, 1.0), grav=st.tuples(st.floats(-20, 20), st.floats(-20, 20)))
def test_toml_round_trip(preset, nx, G, h_wc, T_a, dT, stab, damping, grav):
    cfg = cf.preset_config(preset)
    cfg = dataclasses.replace(
        cfg, stabilization=stab, gravity=grav,
        grid=dataclasses.replace(cfg.grid, nx=nx),
        air=dataclasses.replace(cfg.air, T_in=T_a),
        coolant=dataclasses.replace(cfg.coolant, G_tot=G, h_wc=h_wc, T0=T_a + dT),
        coupling=CouplingConfig(damping=damping))
    assert cf.loads(cf.dumps(cfg)) == cfg


def test_custom_network_round_trip(tmp_path):
    net = cf.NetworkConfig(preset="custom", vertices=((0.05, 0.05), (0.4, 0.05), (0.4, 0.5)),
                           segments=((0, 1), (1, 2)), inlet=0, outlet=2, names=("a", "b"))
    cfg = dataclasses.replace(cf.preset_config("deviceA"), network=net)
    cf.save(cfg, tmp_path / "s.toml")
    back = cf.load(tmp_path / "s.toml")
    assert back == cfg
    assert cf.build_network_from_config(back).n_segments == 2


@pytest.mark.parametrize("text, match", [
    ("name = 'x'\nschema_version = 99\n", "schema_version"),
    ("[grid]\nnx = 0\n", "grid"),
    ("[coolant]\nfriction = 'colebrook'\n", "friction"),
    ("[coolant]\nT0 = 280.0\n", "exceed"),
    ("[network]\npreset = 'deviceZ'\n", "preset"),
    ("[grid]\nbogus = 1\n", "unknown key"),
    ("[grid\n", "malformed"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        cf.loads(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        cf.load(tmp_path / "nope.toml")


def test_vtk_and_csv_are_deterministic(tmp_path):
    g = build_grid(3, 2, 0.3, 0.2)
    rng = np.random.default_rng(0)
    f = {"T": rng.random(6), "q": rng.random(6)}
    a = write_vtk_cells(tmp_path / "a.vtk", g, f).read_bytes()
    b = write_vtk_cells(tmp_path / "b.vtk", g, f).read_bytes()
    assert a == b and b"CELL_DATA 6" in a
    write_csv(tmp_path / "c.csv", ["i", "v"], [[i, v] for i, v in enumerate(f["T"])])
    back = read_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back["v"], f["T"])  # %.17g round-trips exactly


def test_vtk_rejects_wrong_shape(tmp_path):
    with pytest.raises(ValueError):
        write_vtk_cells(tmp_path / "x.vtk", build_grid(2, 2, 1.0, 1.0), {"u": np.zeros(3)})


def test_mean_panel_temperature_is_area_weighted():
    g = build_grid(2, 1, 3.0, 1.0, xn=np.array([0.0, 1.0, 3.0]))
    assert mean_panel_temperature(g, np.array([300.0, 330.0])) == pytest.approx(320.0)


# command line ----------------------------------------------------------------------------

def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nnx = -3\n")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_networktest_passes(tmp_path):
    assert main(["networktest", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "network_profile_eps1.csv").is_file()


def test_cli_layers_pass():
    assert main(["layers2d", "--N", "16"]) == EXIT_OK


def test_cli_nonconvergence_writes_outputs_deterministically(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["run", "--preset", "deviceA", "--max-iter", "2", "--out", str(out)]) == EXIT_NOT_CONVERGED
        outs.append(out)
    for name in ("fields.vtk", "fields.csv", "profiles.csv", "history.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rep = [json.loads((o / "report.json").read_text()) for o in outs]
    rep[0].pop("wall_time"), rep[1].pop("wall_time")
    assert rep[0] == rep[1] and rep[0]["converged"] is False and rep[0]["iterations"] == 2
    # the written scenario reproduces the run configuration
    assert cf.load(outs[0] / "scenario.toml").coupling.outer_max_iter == 2
