import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermosyphon.benchmarks import network_profile, network_test, profile_is_monotone
from thermosyphon.errors import ConfigError, RankDeficiencyError, UnsupportedError
from thermosyphon.pipenet import (FlowBC, FluidState, NetworkProblem1D, NodeDirichlet, NodeFlux, NodeRobin, assemble_pm,
                                  blasius_friction, build_network, coercivity_margin, exact_network_solution,
                                  solve_energy, solve_mass_momentum, solve_pm, three_segment_network,
                                  three_segment_omega)
from thermosyphon.twophase import blasius_resistance

BETA = (3.0, 2.0, 1.0)
DATA = {0: 1.0, 2: 0.0, 3: 0.0}


# topology ---------------------------------------------------------------------------

def test_three_segment_incidence():
    net = three_segment_network(h=0.25)
    leaving, entering = net.incidence(1)
    assert sorted(leaving) == [1, 2] and entering == [0]
    assert net.n_elements == 12 and net.n_nodes == 4 + 3 * 3


def test_numbering_is_deterministic():
    a, b = three_segment_network(h=0.1), three_segment_network(h=0.1)
    np.testing.assert_array_equal(a.elem_a, b.elem_a)
    np.testing.assert_array_equal(a.nodes, b.nodes)


@pytest.mark.parametrize("segments, outlets", [
    ([(0, 1), (1, 2)], (2, 3)),          # outlet not used
    ([(0, 1), (2, 3)], (3,)),            # disconnected
    ([(0, 1), (1, 2), (1, 3)], (2,)),    # dangling junction end
])
def test_invalid_topology(segments, outlets):
    verts = [(0, 0), (1, 0), (2, 0), (2, 1)]
    with pytest.raises(ConfigError):
        build_network(verts, segments, inlet=0, outlets=outlets, h=0.5)


def test_device_channels_start_at_inlet_header():
    from thermosyphon.config import build_network_from_config, preset_config
    cfg = preset_config("deviceA")
    net = build_network_from_config(cfg)
    chans = [i for i, n in enumerate(net.names) if n.startswith("channel")]
    assert len(chans) == 6
    x_first = net.vertices[net.seg_first[chans], 0]
    x_second = net.vertices[net.seg_second[chans], 0]
    # every channel runs from the inlet-side header to the return header
    assert np.ptp(x_first) == 0.0 and np.ptp(x_second) == 0.0 and x_first[0] != x_second[0]


# assembly ---------------------------------------------------------------------------

def _single_pipe(n=4, L=1.0):
    return build_network([(0.0, 0.0), (L, 0.0)], [(0, 1)], inlet=0, outlets=1, n_elements=n)


def test_pure_diffusion_rows():
    net = _single_pipe(4)
    eps, h = 0.3, 0.25
    M = assemble_pm(NetworkProblem1D.uniform(net, eps=eps), net).M.toarray()
    # no boundary data: full nodal matrix; pick an interior node of the segment
    i = net.seg_nodes[0][2]
    left, right = net.seg_nodes[0][1], net.seg_nodes[0][3]
    assert M[i, left] == pytest.approx(-eps / h) and M[i, right] == pytest.approx(-eps / h)
    assert M[i, i] == pytest.approx(2 * eps / h)


def test_upwind_rows():
    net = _single_pipe(5)
    eps, beta, h = 0.1, 2.0, 0.2
    M = assemble_pm(NetworkProblem1D.uniform(net, eps=eps, beta=beta), net, upwind=True).M.toarray()
    nodes = net.seg_nodes[0]
    i, left, right = nodes[2], nodes[1], nodes[3]
    assert M[i, left] == pytest.approx(-eps / h - beta)
    assert M[i, i] == pytest.approx(2 * eps / h + beta)
    assert M[i, right] == pytest.approx(-eps / h)


def test_junction_row_couples_neighbours():
    net = three_segment_network(h=0.5)
    M = assemble_pm(NetworkProblem1D.uniform(net, eps=1.0, beta=BETA), net).M.toarray()
    nbrs = set(np.flatnonzero(M[1]).tolist()) - {1}
    expect = {net.seg_nodes[0][-2], net.seg_nodes[1][1], net.seg_nodes[2][1]}
    assert nbrs == expect


def test_row_sums_vanish_for_balanced_velocity():
    net = three_segment_network(h=0.125)
    M = assemble_pm(NetworkProblem1D.uniform(net, eps=0.5, beta=BETA), net).M.toarray()
    interior = [v for v in range(net.n_nodes) if v not in (0, 2, 3)]
    np.testing.assert_allclose(M[interior].sum(axis=1), 0.0, atol=1e-12)


def test_eps_zero_requires_upwind():
    net = _single_pipe(3)
    prob = NetworkProblem1D.uniform(net, eps=0.0, beta=1.0, bcs={0: NodeDirichlet(1.0), 1: NodeRobin(1.0)})
    with pytest.raises(UnsupportedError):
        solve_pm(prob, net, upwind=False)
    u, _ = solve_pm(prob, net, upwind=True)
    np.testing.assert_allclose(u, 1.0)


def test_floating_network_is_singular():
    net = _single_pipe(3)
    with pytest.raises(RankDeficiencyError):
        solve_pm(NetworkProblem1D.uniform(net, eps=1.0), net)


def test_coercivity_margin_reported():
    net = _single_pipe(4)
    assert coercivity_margin(NetworkProblem1D.uniform(net, eps=1.0, beta=1.0), net) == 0.0
    falling = NetworkProblem1D(eps=np.ones(4), beta=np.array([4.0, 3.0, 2.0, 1.0]), g=0.0, f=0.0, bcs={})
    assert coercivity_margin(falling, net) < 0


# exact three-segment solution ------------------------------------------------------

def test_junction_value_oracle():
    # independent 30-digit evaluation of the closed form at eps = 1
    assert three_segment_omega(1.0, BETA) == pytest.approx(0.779129313665971237, rel=1e-13)


def test_exact_solution_satisfies_kirchhoff():
    net = three_segment_network(h=0.5)
    ex = exact_network_solution(net, 1.0, BETA, DATA)
    assert ex.omega == pytest.approx(three_segment_omega(1.0, BETA), rel=1e-13)
    assert ex.flux[0] == pytest.approx(ex.flux[1] + ex.flux[2], rel=1e-13)
    # flux formula -eps u' + beta u is constant along every segment
    for seg in range(3):
        s = np.linspace(0.0, 1.0, 7)
        J = -ex.eps[seg] * ex.du(seg, s) + ex.beta[seg] * ex.u(seg, s)
        np.testing.assert_allclose(J, ex.flux[seg], rtol=1e-10)


def test_first_order_rates():
    t = network_test(1.0)
    assert 0.8 <= t.orders["u_H1"] <= 1.2
    assert t.omega_discrete[-1] == pytest.approx(t.omega_exact, abs=5e-3)


def test_flux_exact_small_eps():
    t = network_test(1.0 / 50)
    assert max(e["J_rel_max"] for e in t.errors) <= 1e-9


def test_profile_monotone_through_layers():
    prof = network_profile(1.0 / 16, 1.0 / 50)
    assert all(profile_is_monotone(v) for _, v in prof.values())


def test_zero_source_flux_constant_per_segment():
    net = three_segment_network(h=1 / 32)
    prob = NetworkProblem1D.uniform(net, eps=0.2, beta=BETA, bcs={v: NodeDirichlet(d) for v, d in DATA.items()})
    _, J = solve_pm(prob, net)
    for el in net.seg_elems:
        assert np.ptp(J[el]) <= 1e-12 * max(1.0, np.abs(J).max())
    assert J[net.seg_elems[0][-1]] == pytest.approx(J[net.seg_elems[1][0]] + J[net.seg_elems[2][0]], abs=1e-12)


# randomized properties ----------------------------------------------------------------

@st.composite
def random_networks(draw):
    """Random trees: a trunk from the inlet, then branches hanging off earlier vertices."""
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    n_seg = draw(st.integers(1, 6))
    verts = [(0.0, 0.0), (1.0, 0.0)]
    segs = [(0, 1)]
    for _ in range(n_seg - 1):
        # attach to a vertex that is not the inlet
        base = int(rng.integers(1, len(verts)))
        bx, by = verts[base]
        verts.append((bx + rng.uniform(0.2, 1.0), by + rng.uniform(-1.0, 1.0)))
        segs.append((base, len(verts) - 1))
    deg = np.bincount(np.array(segs).ravel(), minlength=len(verts))
    outlets = [v for v in range(1, len(verts)) if deg[v] == 1]
    net = build_network(verts, segs, inlet=0, outlets=outlets,
                        n_elements=rng.integers(1, 6, len(segs)))
    ne = net.n_elements
    eps = np.where(rng.random(ne) < 0.2, 0.0, 10.0 ** rng.uniform(-4, 1, ne))
    beta = rng.uniform(-5, 5, ne)
    beta[(eps == 0) & (beta == 0)] = 1.0
    return net, eps, beta, outlets, rng


@settings(max_examples=1000)
@given(random_networks())
def test_m_matrix_property_1d(case):
    net, eps, beta, _, _ = case
    prob = NetworkProblem1D(eps=eps, beta=beta, g=0.0, f=0.0, bcs={})
    M = assemble_pm(prob, net, upwind=True).M.toarray()
    off = M - np.diag(np.diag(M))
    assert off.max() <= 0.0
    excess = np.diag(M) - np.abs(off).sum(axis=0)
    assert np.all(excess >= -1e-12 * np.abs(M).sum(axis=0))


@settings(max_examples=300)
@given(random_networks())
def test_network_maximum_principle(case):
    net, eps, _, outlets, rng = case
    eps = np.maximum(eps, 1e-6)
    # divergence-free velocity: random outflow at each leaf, summed up the tree
    seg_beta = np.zeros(net.n_segments)
    for j in range(net.n_segments - 1, -1, -1):
        v = net.seg_second[j]
        if v in outlets:
            seg_beta[j] = rng.uniform(0.0, 5.0)
        else:
            seg_beta[j] = seg_beta[net.seg_first == v].sum()
    beta = seg_beta[net.elem_seg]
    data = {v: float(rng.uniform(-1, 1)) for v in [net.inlet, *outlets]}
    prob = NetworkProblem1D(eps=eps, beta=beta, g=0.0, f=0.0, bcs={v: NodeDirichlet(d) for v, d in data.items()})
    u, _ = solve_pm(prob, net)
    lo, hi = min(data.values()), max(data.values())
    assert u.min() >= lo - 1e-10 and u.max() <= hi + 1e-10


@settings(max_examples=200)
@given(st.floats(0.05, 5.0), st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-2, 2))
def test_exact_flux_conservation(eps, b2, b3, u0, u2, u3):
    net = three_segment_network(h=0.5)
    ex = exact_network_solution(net, eps, (b2 + b3, b2, b3), {0: u0, 2: u2, 3: u3})
    scale = max(1.0, *np.abs(ex.flux))
    assert ex.flux[0] == pytest.approx(ex.flux[1] + ex.flux[2], abs=1e-11 * scale)


# coolant momentum and energy ------------------------------------------------------------

def _parallel_pair(D1, D2, n=8):
    """Inlet -> split -> two parallel straight pipes -> merge -> outlet (horizontal)."""
    verts = [(0.0, 0.0), (0.1, 0.0), (0.2, 0.1), (0.2, -0.1), (0.3, 0.0), (0.4, 0.0)]
    segs = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]
    D = [0.01, D1, D2, D1, D2, 0.01]
    return build_network(verts, segs, inlet=0, outlets=5, n_elements=n, D_h=D)


def _uniform_state(net):
    return FluidState.uniform(net, T=330.0, x=0.0, rho=1000.0, mu=1e-3, p=1e5, H=1e5)


def test_parallel_resistors_split_by_resistance():
    # linear friction R = c / rho with c four times larger on the second branch
    net = _parallel_pair(0.01, 0.02)
    R1 = 1.0

    def fric(G, rho, mu, D):
        return np.where(D == 0.02, 4.0 * R1, R1) * np.ones_like(G)

    st_ = _uniform_state(net)
    mom = solve_mass_momentum(net, st_, FlowBC(p_inlet=1e5, G_tot=10.0, H_inlet=1e5), fric, gravity=(0.0, 0.0))
    G1 = mom.G[net.seg_elems[1]].mean()
    G2 = mom.G[net.seg_elems[2]].mean()
    assert G1 / G2 == pytest.approx(4.0, rel=1e-10)


def test_blasius_scaling():
    r1 = blasius_resistance(100.0, 1000.0, 1e-3, 0.01)
    r2 = blasius_resistance(200.0, 1000.0, 1e-3, 0.01)
    # friction factor ~ G^-1/4, so R = (dp/ds)/G ~ G^3/4 and the gradient R G ~ G^7/4
    assert r2 / r1 == pytest.approx(1.68179283050742908606, rel=1e-12)
    assert (r2 * 200.0) / (r1 * 100.0) == pytest.approx(2.0 ** 1.75, rel=1e-12)


def test_momentum_mass_conservation():
    net = _parallel_pair(0.01, 0.015)
    st_ = _uniform_state(net)
    bc = FlowBC(p_inlet=2e5, G_tot=50.0, H_inlet=1e5)
    mom = solve_mass_momentum(net, st_, bc, blasius_friction, gravity=(0.0, -9.81))
    m_tot = 50.0 * net.seg_area[0]
    assert np.max(np.abs(mom.residual)) <= 1e-9 * m_tot
    assert mom.mdot[net.seg_elems[5][-1]] == pytest.approx(m_tot, rel=1e-10)
    for el in net.seg_elems:
        assert np.ptp(mom.mdot[el]) <= 1e-9 * m_tot
    assert mom.phi[net.inlet] == 2e5


def test_enthalpy_linear_for_constant_exchange():
    L, n = 1.0, 10
    net = _single_pipe(n, L)
    mdot = np.full(n, 0.01)
    h_wc, T_w, T_c = 5.0, 350.0, 340.0
    en = solve_energy(net, mdot, np.full(n, T_w), np.full(net.n_nodes, T_c), h_wc, H_inlet=2e5)
    q = h_wc * (T_w - T_c)
    # upwind element enthalpy flows rise by q h per element from the inlet value
    np.testing.assert_allclose(np.diff(en.E), q * L / n, rtol=1e-10)
    assert en.E[0] == pytest.approx(0.01 * 2e5, rel=1e-14)
    np.testing.assert_allclose(np.diff(en.H[net.seg_nodes[0][:-1]]), q * L / n / 0.01, rtol=1e-10)
    np.testing.assert_allclose(en.residual, 0.0, atol=1e-9)


def test_energy_needs_single_outlet():
    net = three_segment_network(h=0.25)
    mdot = np.concatenate([np.full(4, 2.0), np.full(4, 1.5), np.full(4, 0.5)])
    with pytest.raises(UnsupportedError):
        solve_energy(net, mdot, np.zeros(12), np.zeros(net.n_nodes), 1.0, H_inlet=1.0)


def test_flux_boundary_condition():
    net = _single_pipe(4)
    prob = NetworkProblem1D.uniform(net, eps=1.0, bcs={0: NodeDirichlet(0.0), 1: NodeFlux(-2.0)})
    u, J = solve_pm(prob, net)
    np.testing.assert_allclose(J, 2.0, rtol=1e-12)
    assert u[1] == pytest.approx(-2.0)
