"""Staggered fixed-point coupling of the 2D air/panel pair with the 1D coolant network.

Outer loop: solve the air/panel pair for the current coolant temperature,
sample the wall temperature onto the channel elements, run the 1D inner loop
(mass-momentum, energy, state inversion) to convergence and broadcast the
coolant temperature back to the grid.  Exchanged fields are under-relaxed.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import twophase as tp
from .errors import ConfigError, IterationError
from .mesh2d import StructuredGrid2D
from .mfv2d import (AdrProblem2D, Dirichlet, StabilizationKind, ZeroDiffusiveFlux, ZeroTotalFlux,
                    assemble, element_balance, recover_fluxes, solve)
from .pipenet import (FlowBC, FluidState, PipeNetwork, solve_energy,
                      solve_mass_momentum)
from .reduction import power_law_conductivity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingConfig:
    outer_tol: float = 1e-6
    outer_max_iter: int = 200
    inner2d_tol: float = 1e-8
    inner2d_max_iter: int = 50
    inner1d_tol: float = 1e-7
    inner1d_max_iter: int = 200
    damping: float = 0.7
    linear_tol: float = 1e-10

    def __post_init__(self):
        for name in ("outer_tol", "inner2d_tol", "inner1d_tol", "linear_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        for name in ("outer_max_iter", "inner2d_max_iter", "inner1d_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")


@dataclass
class CondenserSetup:
    """Everything the coupled solve needs, already in SI units and reduced form."""

    grid: StructuredGrid2D
    net: PipeNetwork | None
    sat: tp.SaturationModel
    lam1a: float
    lam2a: float
    lam1w: float
    T_a_in: float
    T0: float
    V_air: float
    h_aw: float
    h_wc: float
    G_tot: float
    k_w: float = 200.0
    rho_air: float = 1.184
    cp_air: float = 1006.0
    k0_air: float = 0.0262
    u0_air: float = 300.0
    beta_exp: float = 0.9
    x_inlet: float = 1.0
    p_inlet: float | None = None
    H_inlet: float | None = None
    friction: str = "blasius"
    gravity: tuple = (0.0, -9.81)
    stabilization: str = "sg"
    air_velocity_model: str = "constant"
    air_gap: float = 0.05

    def __post_init__(self):
        if self.p_inlet is None:
            self.p_inlet = float(self.sat.p_sat(self.T0))
        if self.H_inlet is None:
            self.H_inlet = float(tp.mixture_enthalpy(self.T0, self.x_inlet, self.sat))
        if not self.T0 > self.T_a_in:
            raise ConfigError("coolant temperature T0 must exceed the air inlet temperature")

    @property
    def dT_scale(self) -> float:
        return self.T0 - self.T_a_in

    @property
    def h_aw_air(self) -> float:
        return self.h_aw / self.lam1a

    @property
    def h_aw_wall(self) -> float:
        return self.h_aw / self.lam1w

    def air_speed(self, T_w: np.ndarray) -> float:
        """Reduced air speed ``(lambda_2/lambda_1) |V|``."""
        if self.air_velocity_model == "constant":
            V = self.V_air
        elif self.air_velocity_model == "natural":
            dT = float(np.mean(T_w)) - self.T_a_in
            V = float(tp.natural_convection_velocity(dT, self.T_a_in, self.air_gap))
        else:
            raise ConfigError(f"unknown air velocity model {self.air_velocity_model!r}")
        return self.lam2a / self.lam1a * V


# field transfer ----------------------------------------------------------------

@dataclass(frozen=True)
class ChannelMask:
    elem_cell: np.ndarray  # containing cell per 1D element
    cell_segment: np.ndarray  # lowest segment index crossing each cell, -1 if none
    cell_conductance: np.ndarray  # sum of h_wc * length per cell [W/K]


def build_mask(grid: StructuredGrid2D, net: PipeNetwork | None, h_wc: float) -> ChannelMask:
    cell_seg = np.full(grid.nel, -1, dtype=np.int64)
    cond = np.zeros(grid.nel)
    if net is None:
        return ChannelMask(np.zeros(0, dtype=np.int64), cell_seg, cond)
    mids = net.elem_mid
    cells = np.empty(net.n_elements, dtype=np.int64)
    for k, (x, y) in enumerate(mids):
        try:
            cells[k] = grid.locate(x, y)
        except ValueError as exc:
            raise ConfigError(f"channel element {k} midpoint ({x:.4g}, {y:.4g}) lies outside the panel") from exc
    np.add.at(cond, cells, h_wc * net.elem_h)
    for k in np.argsort(net.elem_seg, kind="stable"):
        c = cells[k]
        if cell_seg[c] < 0:
            cell_seg[c] = net.elem_seg[k]
    return ChannelMask(cells, cell_seg, cond)


def sample_wall_to_network(T_w: np.ndarray, mask: ChannelMask) -> np.ndarray:
    """Wall temperature of the cell containing each element midpoint."""
    return np.asarray(T_w, dtype=float)[mask.elem_cell]


def broadcast_coolant_to_grid(T_c: np.ndarray, net: PipeNetwork | None, mask: ChannelMask,
                              grid: StructuredGrid2D, h_wc: float, lam1w: float):
    """Cell coolant temperature (conductance-weighted) and ``h*_wc`` per cell.

    ``h*_wc = sum(h_wc L_e) / (|K| lambda_1w)`` so that the panel receives exactly
    the heat the network releases.  Uncrossed cells get ``h*_wc = 0``.
    """
    Tc_cell = np.zeros(grid.nel)
    if net is None or net.n_elements == 0:
        return Tc_cell, np.zeros(grid.nel)
    w = h_wc * net.elem_h
    num = np.zeros(grid.nel)
    np.add.at(num, mask.elem_cell, w * np.asarray(T_c))
    active = mask.cell_conductance > 0
    Tc_cell[active] = num[active] / mask.cell_conductance[active]
    return Tc_cell, mask.cell_conductance / (grid.areas * lam1w)


# 2D pair ----------------------------------------------------------------------------

def _air_problem(setup: CondenserSetup, T_a: np.ndarray, T_w: np.ndarray) -> AdrProblem2D:
    k_a = power_law_conductivity(setup.k0_air, setup.u0_air, setup.beta_exp, T_a)
    v = setup.air_speed(T_w)
    rc = setup.rho_air * setup.cp_air

    def bcs(x, y, side):
        if side == "bottom":
            return Dirichlet(setup.T_a_in)
        if side == "top":
            return ZeroDiffusiveFlux()
        return ZeroTotalFlux()

    return AdrProblem2D.build(setup.grid, alpha=k_a, beta=(0.0, rc * v), gamma=setup.h_aw_air, f=0.0, bcs=bcs)


def _wall_problem(setup: CondenserSetup, hwc_star: np.ndarray, Tc_cell: np.ndarray) -> AdrProblem2D:
    gamma = setup.h_aw_wall + hwc_star
    return AdrProblem2D.build(setup.grid, alpha=setup.k_w, beta=(0.0, 0.0), gamma=gamma,
                              f=hwc_star * Tc_cell, bcs=lambda x, y, s: ZeroTotalFlux())


@dataclass
class PairResult:
    T_a: np.ndarray
    T_w: np.ndarray
    iterations: int
    history: list
    air: AdrProblem2D
    wall: AdrProblem2D
    balance_air: np.ndarray
    balance_wall: np.ndarray


def solve_2d_pair(setup: CondenserSetup, Tc_cell: np.ndarray, hwc_star: np.ndarray,
                  T_a0: np.ndarray, T_w0: np.ndarray, cfg: CouplingConfig = CouplingConfig()) -> PairResult:
    """Monolithic block solve of the air and panel equations with lagged coefficients.

    The panel's air coupling is ``h*_aw = h_aw/lambda_1w`` and the air's is
    ``h~_aw = h_aw/lambda_1a``.  Converged when the coefficient-driven update
    is below ``inner2d_tol`` (relative to ``T0 - T_a_in``).
    """
    grid = setup.grid
    n = grid.nel
    kind = StabilizationKind.parse(setup.stabilization)
    T_a, T_w = np.asarray(T_a0, dtype=float).copy(), np.asarray(T_w0, dtype=float).copy()
    wall = _wall_problem(setup, hwc_star, Tc_cell)
    Kw, gw = assemble(wall, grid, kind)
    floating = not np.any(wall.gamma > 0)
    history = []
    for it in range(1, cfg.inner2d_max_iter + 1):
        air = _air_problem(setup, T_a, T_w)
        Ka, ga = assemble(air, grid, kind)
        # remove the self-coupling diagonals, then add them back in block form
        Ka_off = -sp.diags(setup.h_aw_air * grid.areas)
        Kw_off = -sp.diags(setup.h_aw_wall * grid.areas)
        K = sp.bmat([[Ka, Ka_off], [Kw_off, Kw]], format="lil")
        g = np.concatenate([ga, gw])
        if floating:
            # pure-Neumann panel without any exchange: keep the previous mean level
            K[n, :] = 0.0
            K[n, n:] = grid.areas / grid.areas.sum()
            g[n] = float(np.average(T_w, weights=grid.areas))
        sol = solve(K.tocsr(), g, cfg.linear_tol)
        T_a_new, T_w_new = sol[:n], sol[n:]
        change = float(max(np.max(np.abs(T_a_new - T_a)), np.max(np.abs(T_w_new - T_w))) / setup.dT_scale)
        # a fixed point is reached once the coefficients stop depending on the update
        air_next = _air_problem(setup, T_a_new, T_w_new)
        coef = float(max(np.max(np.abs(air_next.alpha - air.alpha) / air.alpha),
                         np.max(np.abs(air_next.beta_n - air.beta_n)) / max(np.max(np.abs(air.beta_n)), 1e-300)))
        history.append(change)
        T_a, T_w = T_a_new, T_w_new
        if coef <= cfg.inner2d_tol or change <= cfg.inner2d_tol:
            break
    else:
        raise IterationError(f"2D air/panel iteration did not converge in {cfg.inner2d_max_iter} steps",
                             history=history)
    ja = recover_fluxes(T_a, air, grid, kind)
    jw = recover_fluxes(T_w, wall, grid, kind)
    bal_a = element_balance(T_a, ja, air, grid) - setup.h_aw_air * T_w * grid.areas
    bal_w = element_balance(T_w, jw, wall, grid) - setup.h_aw_wall * T_a * grid.areas
    return PairResult(T_a, T_w, it, history, air, wall, bal_a, bal_w)


# 1D inner loop ---------------------------------------------------------------------

@dataclass
class NetworkResult:
    state: FluidState
    iterations: int
    history: list
    momentum_residual: float
    energy_residual: float
    mass_mismatch: float
    segment_flux_spread: float
    p_discrepancy: float
    superheated: int
    subcooled: int
    evaluations: int = 0


def _update_properties(state: FluidState, net: PipeNetwork, sat: tp.SaturationModel, p_node):
    """Invert the nodal enthalpy and refresh element properties; returns ``(inversion, n_floored)``.

    Iterates that undershoot the tabulated liquid range are floored at the
    table minimum and counted (the count must be zero at convergence).
    """
    floor = float(sat.table[0, 3])
    low = state.H < floor
    inv = tp.invert_state(np.maximum(state.H, floor), sat, p_hint=p_node)
    state.T_node, state.x_node, state.regime_node = inv.T, inv.x, inv.regime
    up = state.upstream_node(net)
    T_up, x_up = inv.T[up], inv.x[up]
    state.x, state.regime = x_up, inv.regime[up]
    state.rho = np.asarray(tp.mixture_density(T_up, x_up, sat))
    state.mu = np.asarray(tp.mixture_viscosity(T_up, x_up, sat))
    state.T_c = 0.5 * (inv.T[net.elem_a] + inv.T[net.elem_b])
    return inv, int(np.count_nonzero(low))


def _subcooled_slope(H: np.ndarray, regime: np.ndarray, sat: tp.SaturationModel) -> np.ndarray:
    """Exact ``dT_c/dH`` of the piecewise-linear inversion: ``1/c_p`` below the liquid line, else 0."""
    hl, T = sat.table[:, 3], sat.table[:, 0]
    i = np.clip(np.searchsorted(hl, H) - 1, 0, len(hl) - 2)
    return np.where(regime == tp.SUBCOOLED, (T[i + 1] - T[i]) / (hl[i + 1] - hl[i]), 0.0)


def initial_fluid_state(setup: CondenserSetup) -> FluidState:
    sat, T0 = setup.sat, setup.T0
    x = setup.x_inlet
    st = FluidState.uniform(setup.net, T=T0, x=x, rho=float(tp.mixture_density(T0, x, sat)),
                            mu=float(tp.mixture_viscosity(T0, x, sat)), p=setup.p_inlet, H=setup.H_inlet)
    mom = solve_mass_momentum(setup.net, st, FlowBC(setup.p_inlet, setup.G_tot, setup.H_inlet),
                              setup.friction, gravity=setup.gravity)
    st.G, st.phi, st.p = mom.G, mom.phi, mom.p
    return st


def solve_enthalpy(setup: CondenserSetup, state: FluidState, mdot: np.ndarray, T_w_elem: np.ndarray,
                   p_node: np.ndarray, tol: float = 1e-12, max_iter: int = 100):
    """Energy balance for fixed element flows: semi-smooth Newton on ``T_c(H)``.

    ``T_c(H)`` is increasing and concave (flat inside the dome, slope ``1/c_p``
    in the liquid), so the iteration is monotone.  Returns the updated state
    copy, the last :class:`EnergyResult` and the iteration count.
    """
    net, sat = setup.net, setup.sat
    st = state.copy()
    st.G = mdot / net.elem_area
    h_fg = float(sat.h_v(setup.T0) - sat.h_l(setup.T0))
    floor = float(sat.table[0, 3])
    _update_properties(st, net, sat, p_node)
    for it in range(1, max_iter + 1):
        slope = _subcooled_slope(st.H, st.regime_node, sat)
        en = solve_energy(net, mdot, T_w_elem, st.T_node, setup.h_wc, setup.H_inlet,
                          dTc_dH=slope, H_prev=st.H)
        H_new = np.maximum(en.H, floor)  # project undershooting iterates back into the table
        change = float(np.max(np.abs(H_new - st.H))) / h_fg
        st.H, st.W = H_new, en.W
        _, floored = _update_properties(st, net, sat, p_node)
        log.debug("enthalpy Newton %d: change %.3e, floored %d", it, change, floored)
        if change <= tol and floored == 0:
            break
    else:
        raise IterationError(f"enthalpy Newton did not converge in {max_iter} steps (last change {change:.3e})")
    return st, en, it


@dataclass(frozen=True)
class _LoopBasis:
    """Divergence-free flows ``m = m0 + N q`` (``N`` orthonormal basis of independent loops)."""

    N: np.ndarray
    m0: np.ndarray

    @classmethod
    def build(cls, net: PipeNetwork, m_ref: np.ndarray) -> "_LoopBasis":
        inc = np.zeros((net.n_vertices, net.n_segments))
        inc[net.seg_first, np.arange(net.n_segments)] += 1.0
        inc[net.seg_second, np.arange(net.n_segments)] -= 1.0
        N = sla.null_space(inc)
        return cls(N, m_ref - N @ (N.T @ m_ref))


def _segment_flows(net: PipeNetwork, mdot: np.ndarray) -> np.ndarray:
    return np.array([float(np.mean(mdot[el])) for el in net.seg_elems])


def solve_network(setup: CondenserSetup, state: FluidState, T_w_elem: np.ndarray,
                  cfg: CouplingConfig = CouplingConfig(), T_w_prev: np.ndarray | None = None,
                  min_step: float = 1.0 / 256) -> NetworkResult:
    """Inner 1D problem for a given wall temperature, with continuation.

    ``state`` is assumed to solve the problem at ``T_w_prev`` (default: the
    uniform inlet temperature, i.e. no wall exchange).  If Newton fails for the
    full change of wall temperature, the step is halved and the solution is
    walked towards ``T_w_elem``; successful steps double the increment.
    """
    T_w_elem = np.asarray(T_w_elem, dtype=float)
    T_w_prev = np.full_like(T_w_elem, setup.T0) if T_w_prev is None else np.asarray(T_w_prev, dtype=float)
    t, step, cur, res = 0.0, 1.0, state, None
    evaluations, iterations, history = 0, 0, []
    while t < 1.0:
        t_try = min(1.0, t + step)
        try:
            res = _solve_network_fixed(setup, cur, T_w_prev + t_try * (T_w_elem - T_w_prev), cfg)
        except IterationError as exc:
            history += exc.history
            step *= 0.5
            if step < min_step:
                raise IterationError(f"network continuation stalled at {t:.4f} of the wall change: {exc}",
                                     history=history) from exc
            log.debug("network continuation: step reduced to %.4f at t = %.4f", step, t)
            continue
        evaluations += res.evaluations
        iterations += res.iterations
        history += res.history
        t, cur, step = t_try, res.state, 2.0 * step
    res.evaluations, res.iterations, res.history = evaluations, iterations, history
    return res


def _solve_network_fixed(setup: CondenserSetup, state: FluidState, T_w_elem: np.ndarray,
                         cfg: CouplingConfig) -> NetworkResult:
    """Inner 1D problem for a given wall temperature, started from ``state``.

    The unknowns are the independent loop flows of the network.  For given
    flows the enthalpy is solved exactly (:func:`solve_enthalpy`); the
    resulting densities and viscosities feed the mass-momentum solve, whose
    flows must reproduce the input.  That mismatch is driven to zero by Newton's
    method (finite-difference Jacobian, Broyden updates, backtracking), with the
    saturation pressure lagged between Newton solves until it settles.
    """
    net, sat = setup.net, setup.sat
    bc = FlowBC(p_inlet=setup.p_inlet, G_tot=setup.G_tot, H_inlet=setup.H_inlet)
    out_seg = int(np.flatnonzero(net.seg_second == net.outlet)[0])
    in_seg = int(np.flatnonzero(net.seg_first == net.inlet)[0])
    m_tot = setup.G_tot * net.seg_area[out_seg]
    A = net.elem_area
    mom_tol = 0.01 * cfg.inner1d_tol

    base = state.copy()
    m_seg = _segment_flows(net, base.G * A)
    basis = _LoopBasis.build(net, m_seg)
    q = basis.N.T @ m_seg / m_tot
    p_node = base.phi.copy()
    n_eval = 0
    history = []

    def evaluate(qv):
        nonlocal n_eval
        n_eval += 1
        m = basis.m0 + basis.N @ (qv * m_tot)
        st, en, _ = solve_enthalpy(setup, base, m[net.elem_seg], T_w_elem, p_node)
        mom = solve_mass_momentum(net, st, bc, setup.friction, gravity=setup.gravity, tol=mom_tol)
        F = basis.N.T @ (_segment_flows(net, mom.mdot) - m) / m_tot
        return F, (st, mom)

    def fd_jacobian(qv, F0):
        k = len(qv)
        J = np.empty((k, k))
        for i in range(k):
            dq = 1e-7 * max(1.0, abs(qv[i]))
            e = np.zeros(k)
            e[i] = dq
            J[:, i] = (evaluate(qv + e)[0] - F0) / dq
        return J

    total_its = 0
    for sweep in range(1, cfg.inner1d_max_iter + 1):
        F, aux = evaluate(q)
        J, fresh = None, False
        for _ in range(cfg.inner1d_max_iter):
            res = float(np.max(np.abs(F), initial=0.0))
            history.append(res)
            if res <= cfg.inner1d_tol:
                break
            if J is None:
                J, fresh = fd_jacobian(q, F), True
            total_its += 1
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
            lam, n0 = 1.0, float(np.linalg.norm(F))
            while True:
                Ft, auxt = evaluate(q + lam * step)
                if np.linalg.norm(Ft) < (1.0 - 1e-4 * lam) * n0:
                    break
                lam *= 0.5
                if lam < 1.0 / 64:
                    break
            if lam < 1.0 / 64:
                if fresh:
                    raise IterationError("network Newton line search failed", history=history)
                J, fresh = fd_jacobian(q, F), True
                continue
            s_q = lam * step
            # Broyden rank-one update of the flow Jacobian
            J = J + np.outer(Ft - F - J @ s_q, s_q) / float(s_q @ s_q)
            fresh = False
            q, F, aux = q + s_q, Ft, auxt
        else:
            raise IterationError(f"network Newton did not converge in {cfg.inner1d_max_iter} steps "
                                 f"(last mismatch {history[-1]:.3e})", history=history)
        st, mom = aux
        p_new = mom.phi
        dp = float(np.max(np.abs(p_new - p_node)))
        p_node = p_new
        # saturation temperature moves by dp / (dp_sat/dT); stop once that is below tolerance
        dT_dp = float(np.max(np.gradient(sat.table[:, 0], sat.table[:, 5])))
        if dp * dT_dp <= cfg.inner1d_tol * setup.dT_scale:
            break
    else:
        raise IterationError("network pressure lag did not settle", history=history)

    # final consistent state: enthalpy for the exactly conservative momentum flows
    st, en, _ = solve_enthalpy(setup, st, mom.mdot, T_w_elem, p_node)
    st.phi, st.G, st.p = mom.phi, mom.G, mom.p
    inv, _ = _update_properties(st, net, sat, mom.phi)
    st.clamp_count = int(np.count_nonzero(inv.superheated))

    spread = max(float(np.ptp(mom.mdot[el])) for el in net.seg_elems)
    m_in = mom.mdot[net.seg_elems[in_seg][0]]
    m_out = mom.mdot[net.seg_elems[out_seg][-1]]
    mismatch = float(max(abs(m_in - m_out), abs(m_out - m_tot)) / m_tot)
    e_res = float(np.max(np.abs(en.residual)) / abs(m_tot * setup.H_inlet))
    sat_n = inv.regime == tp.SATURATED
    p_disc = float(np.max(np.abs(inv.p[sat_n] - mom.phi[sat_n]), initial=0.0))
    return NetworkResult(st, total_its, history, float(np.max(np.abs(mom.residual))) / m_tot, e_res,
                         mismatch, spread / m_tot, p_disc,
                         int(np.count_nonzero(inv.superheated)), int(np.count_nonzero(inv.subcooled)),
                         n_eval)


# outer loop -------------------------------------------------------------------------

@dataclass
class CoupledState:
    T_a: np.ndarray
    T_w: np.ndarray
    fluid: FluidState | None
    mask: ChannelMask
    Tc_cell: np.ndarray
    hwc_star: np.ndarray
    history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0


def energy_bookkeeping(setup: CondenserSetup, state: CoupledState, pair: "PairResult | None" = None) -> dict:
    """Heat released by the coolant versus heat received by the air [W].

    ``Q_panel_to_air`` sums the exchange term cell by cell; ``Q_air`` is the
    net enthalpy flux leaving the air domain through its boundary (only
    available when the final pair solve is passed in).
    """
    grid = setup.grid
    q_net = 0.0
    if setup.net is not None and state.fluid is not None:
        T_w_el = sample_wall_to_network(state.T_w, state.mask)
        q_net = float(np.sum(setup.h_wc * setup.net.elem_h * (state.fluid.T_c - T_w_el)))
    q_panel = float(np.sum(setup.h_aw * (state.T_w - state.T_a) * grid.areas))
    q_air = float("nan")
    if pair is not None:
        kind = StabilizationKind.parse(setup.stabilization)
        j = recover_fluxes(pair.T_a, pair.air, grid, kind)
        bnd = grid.boundary_edges
        q_air = float(setup.lam1a * np.sum(j[bnd]))
    rel = abs(q_net - q_panel) / max(abs(q_net), abs(q_panel), 1e-300)
    return {"Q_network": q_net, "Q_panel_to_air": q_panel, "Q_air": q_air, "relative_mismatch": rel}


def run_staggered(setup: CondenserSetup, cfg: CouplingConfig = CouplingConfig()) -> CoupledState:
    """Outer staggered iteration; raises :class:`IterationError` on exhaustion."""
    t0 = time.perf_counter()
    grid, net = setup.grid, setup.net
    theta = cfg.damping
    mask = build_mask(grid, net, setup.h_wc)
    T_a = np.full(grid.nel, setup.T_a_in)
    T_w = np.full(grid.nel, setup.T0)
    fluid = None
    T_c_el = np.zeros(0)
    if net is not None:
        T_w_net = sample_wall_to_network(T_w, mask)
        fluid = solve_network(setup, initial_fluid_state(setup), T_w_net, cfg).state
        T_c_el = fluid.T_c.copy()
    Tc_cell, hwc_star = broadcast_coolant_to_grid(T_c_el, net, mask, grid, setup.h_wc, setup.lam1w)
    state = CoupledState(T_a, T_w, fluid, mask, Tc_cell, hwc_star)
    diag = {"inner2d": [], "inner1d": [], "superheated": 0, "subcooled": 0}
    failure = None
    for n in range(1, cfg.outer_max_iter + 1):
        pair = solve_2d_pair(setup, Tc_cell, hwc_star, state.T_a, state.T_w, cfg)
        T_w_ex = theta * pair.T_w + (1.0 - theta) * state.T_w
        dTa = float(np.max(np.abs(pair.T_a - state.T_a)))
        dTw = float(np.max(np.abs(pair.T_w - state.T_w)))
        state.T_a, state.T_w = pair.T_a, T_w_ex
        diag["inner2d"].append(pair.iterations)
        dTc = 0.0
        if net is not None:
            try:
                T_w_target = sample_wall_to_network(T_w_ex, mask)
                res = solve_network(setup, state.fluid, T_w_target, cfg, T_w_prev=T_w_net)
                T_w_net = T_w_target
            except IterationError as exc:
                failure = f"coolant network solve failed at outer iteration {n}: {exc}"
                break
            T_c_new = theta * res.state.T_c + (1.0 - theta) * T_c_el
            dTc = float(np.max(np.abs(res.state.T_c - T_c_el)))
            T_c_el = T_c_new
            state.fluid = res.state
            diag["inner1d"].append(res.iterations)
            diag.update(superheated=res.superheated, subcooled=res.subcooled,
                        momentum_residual=res.momentum_residual, energy_residual=res.energy_residual,
                        mass_mismatch=res.mass_mismatch, segment_flux_spread=res.segment_flux_spread,
                        p_discrepancy=res.p_discrepancy)
        Tc_cell, hwc_star = broadcast_coolant_to_grid(T_c_el, net, mask, grid, setup.h_wc, setup.lam1w)
        state.Tc_cell, state.hwc_star = Tc_cell, hwc_star
        r = max(dTa, dTw, dTc) / setup.dT_scale
        state.history.append({"iteration": n, "residual": r, "dT_a": dTa, "dT_w": dTw, "dT_c": dTc,
                              "clamped": diag["superheated"], "subcooled": diag["subcooled"]})
        log.info("outer %3d  residual %.3e  (dTa %.2e dTw %.2e dTc %.2e)", n, r, dTa, dTw, dTc)
        if r <= cfg.outer_tol:
            state.converged = True
            break
    state.iterations = len(state.history)
    # final consistent pair solve so the reported fields satisfy the 2D balance exactly
    pair = solve_2d_pair(setup, Tc_cell, hwc_star, state.T_a, state.T_w, cfg)
    state.T_a, state.T_w = pair.T_a, pair.T_w
    scale_a = np.max(np.abs(pair.air.f * grid.areas)) + np.max(np.abs(setup.h_aw_air * pair.T_a * grid.areas))
    scale_w = np.max(np.abs(pair.wall.f * grid.areas)) + np.max(np.abs(setup.h_aw_wall * pair.T_w * grid.areas))
    diag["balance_air"] = float(np.max(np.abs(pair.balance_air)) / scale_a)
    diag["balance_wall"] = float(np.max(np.abs(pair.balance_wall)) / scale_w)
    if state.fluid is not None:
        state.fluid.T_c = T_c_el
    state.diagnostics = diag
    state.diagnostics["energy"] = energy_bookkeeping(setup, state, pair)
    state.wall_time = time.perf_counter() - t0
    if not state.converged:
        last = state.history[-1]["residual"] if state.history else float("nan")
        raise IterationError(failure or f"outer iteration did not converge in {cfg.outer_max_iter} steps "
                             f"(last residual {last:.3e})",
                             history=[h["residual"] for h in state.history], report=state)
    return state
