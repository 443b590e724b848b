import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

import thermosyphon.coupling as cp
from thermosyphon.config import build_setup, preset_config
from thermosyphon.coupling import (CouplingConfig, broadcast_coolant_to_grid, build_mask, energy_bookkeeping,
                                   initial_fluid_state, run_staggered, sample_wall_to_network, solve_2d_pair,
                                   solve_enthalpy)
from thermosyphon.errors import ConfigError, IterationError
from thermosyphon.mesh2d import build_grid
from thermosyphon.pipenet import build_network
from thermosyphon.twophase import SATURATED, SUBCOOLED


def _two_cell_case():
    grid = build_grid(2, 1, 2.0, 1.0)
    net = build_network([(0.2, 0.5), (1.8, 0.5)], [(0, 1)], inlet=0, outlets=1, n_elements=8)
    return grid, net


def test_mask_locates_elements():
    grid, net = _two_cell_case()
    mask = build_mask(grid, net, h_wc=3.0)
    np.testing.assert_array_equal(mask.elem_cell, [0] * 4 + [1] * 4)
    np.testing.assert_allclose(mask.cell_conductance, [3.0 * 0.8, 3.0 * 0.8])
    assert mask.cell_segment.tolist() == [0, 0]
    T_w = np.array([300.0, 310.0])
    np.testing.assert_array_equal(sample_wall_to_network(T_w, mask), [300.0] * 4 + [310.0] * 4)


def test_mask_rejects_channels_outside_panel():
    grid = build_grid(2, 1, 2.0, 1.0)
    net = build_network([(0.2, 0.5), (2.5, 0.5)], [(0, 1)], inlet=0, outlets=1, n_elements=4)
    with pytest.raises(ConfigError):
        build_mask(grid, net, 3.0)


def test_uncrossed_cells_have_no_exchange():
    grid = build_grid(2, 2, 2.0, 2.0)
    net = build_network([(0.2, 0.5), (1.8, 0.5)], [(0, 1)], inlet=0, outlets=1, n_elements=8)
    mask = build_mask(grid, net, 3.0)
    Tc, hs = broadcast_coolant_to_grid(np.full(8, 350.0), net, mask, grid, 3.0, 6e-4)
    assert hs[2] == hs[3] == 0.0 and np.all(hs[:2] > 0)
    assert mask.cell_segment.tolist() == [0, 0, -1, -1]


@given(st.lists(st.floats(300.0, 400.0), min_size=8, max_size=8), st.floats(300.0, 400.0),
       st.floats(300.0, 400.0))
def test_broadcast_preserves_exchanged_heat(T_c, Tw0, Tw1):
    grid, net = _two_cell_case()
    h_wc, lam1w = 3.0, 6e-4
    mask = build_mask(grid, net, h_wc)
    T_c = np.array(T_c)
    Tc_cell, hs = broadcast_coolant_to_grid(T_c, net, mask, grid, h_wc, lam1w)
    T_w = np.array([Tw0, Tw1])
    q_panel = np.sum(hs * lam1w * grid.areas * (Tc_cell - T_w))
    q_net = np.sum(h_wc * net.elem_h * (T_c - sample_wall_to_network(T_w, mask)))
    assert q_panel == pytest.approx(q_net, rel=1e-12, abs=1e-9)
    assert Tc_cell.min() >= T_c.min() - 1e-9 and Tc_cell.max() <= T_c.max() + 1e-9


def test_coupling_config_validation():
    with pytest.raises(ConfigError):
        CouplingConfig(damping=0.0)
    with pytest.raises(ConfigError):
        CouplingConfig(outer_tol=-1.0)
    with pytest.raises(ConfigError):
        CouplingConfig(outer_max_iter=0)


@pytest.fixture(scope="module")
def setup_A():
    return build_setup(preset_config("deviceA"))


def test_air_monotone_for_fixed_coolant(setup_A):
    s = setup_A
    mask = build_mask(s.grid, s.net, s.h_wc)
    T_c = np.full(s.net.n_elements, s.T0 - 0.5)
    Tc_cell, hs = broadcast_coolant_to_grid(T_c, s.net, mask, s.grid, s.h_wc, s.lam1w)
    n = s.grid.nel
    pair = solve_2d_pair(s, Tc_cell, hs, np.full(n, s.T_a_in), np.full(n, s.T0))
    Ta = pair.T_a.reshape(s.grid.ny, s.grid.nx)
    assert np.all(np.diff(Ta, axis=0) >= -1e-10)
    assert pair.T_w.max() <= s.T0 - 0.5 + 1e-9 and pair.T_a.min() >= s.T_a_in - 1e-9
    assert np.max(np.abs(pair.balance_air)) < 1e-8 and np.max(np.abs(pair.balance_wall)) < 1e-8


def test_enthalpy_solve_condenses_monotonically(setup_A):
    s = setup_A
    st_ = initial_fluid_state(s)
    T_w = np.full(s.net.n_elements, s.T0 - 1.0)
    out, en, its = solve_enthalpy(s, st_, st_.G * s.net.elem_area, T_w, st_.phi)
    assert its < 20
    np.testing.assert_allclose(en.residual / (s.G_tot * s.H_inlet), 0.0, atol=1e-9)
    # a colder wall only removes heat: enthalpy never exceeds the inlet value
    assert out.H.max() <= s.H_inlet * (1 + 1e-12)
    assert set(np.unique(out.regime_node)) <= {SATURATED, SUBCOOLED}


def test_outer_exhaustion_returns_report(setup_A):
    cfg = CouplingConfig(outer_max_iter=2)
    with pytest.raises(IterationError) as info:
        run_staggered(setup_A, cfg)
    rep = info.value.report
    assert rep is not None and not rep.converged
    assert [h["iteration"] for h in rep.history] == [1, 2]
    assert len(info.value.history) == 2


def test_inner_failure_returns_report(setup_A, monkeypatch):
    calls = {"n": 0}
    real = cp.solve_network

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] > 2:
            raise IterationError("forced failure")
        return real(*args, **kw)

    monkeypatch.setattr(cp, "solve_network", flaky)
    with pytest.raises(IterationError, match="forced failure") as info:
        run_staggered(setup_A)
    rep = info.value.report
    assert rep is not None and len(rep.history) == 1
    assert np.all(np.isfinite(rep.T_w))


# converged deviceA run --------------------------------------------------------------------

def test_deviceA_converges_with_monotone_report(deviceA_run):
    setup, state, _ = deviceA_run
    assert state.converged and state.iterations <= 200
    assert [h["iteration"] for h in state.history] == list(range(1, state.iterations + 1))
    r = [h["residual"] for h in state.history]
    assert r[-1] <= 1e-6


def test_deviceA_network_conservation(deviceA_run):
    setup, state, _ = deviceA_run
    d = state.diagnostics
    assert d["momentum_residual"] <= 1e-9
    assert d["segment_flux_spread"] <= 1e-9
    assert d["mass_mismatch"] <= 1e-10
    assert d["superheated"] <= 0.01 * setup.net.n_nodes


def test_deviceA_energy_balance(deviceA_run):
    setup, state, _ = deviceA_run
    e = state.diagnostics["energy"]
    assert e["Q_network"] > 0
    assert e["relative_mismatch"] <= 1e-6
    assert e["Q_air"] == pytest.approx(e["Q_panel_to_air"], rel=1e-6)


def test_bookkeeping_without_pair(deviceA_run):
    setup, state, _ = deviceA_run
    e = energy_bookkeeping(setup, state)
    assert np.isnan(e["Q_air"]) and e["Q_network"] == pytest.approx(state.diagnostics["energy"]["Q_network"])


def test_deviceA_quality_decreases_along_flow(deviceA_run):
    setup, state, _ = deviceA_run
    net, fl = setup.net, state.fluid
    for el in net.seg_elems:
        x = fl.x[el] if np.sum(fl.G[el]) >= 0 else fl.x[el][::-1]
        assert np.all(np.diff(x) <= 1e-12)
