"""Stabilised primal-mixed discretisation of advection-diffusion on pipe networks.

Each segment carries a 1D mesh; junction vertices are shared nodes, so nodal
values are single-valued there and the nodal rows are Kirchhoff balances
``sum_out J - sum_in J = sum f h / 2``.  On every element the flux is

    J_k = -eps_k (u_b - u_a) / h_k + beta_k (u_a + u_b) / 2 - g_k

and the upwind variant replaces ``eps_k`` with ``eps_k + |beta_k| h_k / 2``,
which turns the advective part into ``beta^+ u_a + beta^- u_b``.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, IterationError, NumericalError, RankDeficiencyError, UnsupportedError
from .mfv2d import bernoulli

log = logging.getLogger(__name__)

GRAVITY = (0.0, -9.81)


@dataclass(frozen=True)
class PipeNetwork:
    """Directed segments between vertices plus a global 1D mesh.

    Nodes ``0 .. n_vertices-1`` are the vertices; segment-interior nodes follow,
    segment by segment.  Element ``k`` runs from ``elem_a[k]`` to ``elem_b[k]``
    along segment ``elem_seg[k]``.
    """

    vertices: np.ndarray  # (nv, 2)
    seg_first: np.ndarray
    seg_second: np.ndarray
    seg_length: np.ndarray
    seg_dir: np.ndarray  # (ns, 2) unit vectors
    seg_dh: np.ndarray
    seg_nel: np.ndarray
    inlet: int
    outlets: tuple
    nodes: np.ndarray  # (nn, 2)
    elem_a: np.ndarray
    elem_b: np.ndarray
    elem_seg: np.ndarray
    elem_h: np.ndarray
    seg_elems: tuple  # per segment: element indices in flow order
    seg_nodes: tuple  # per segment: node indices first -> second
    names: tuple = ()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_segments(self) -> int:
        return len(self.seg_first)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elem_a)

    @property
    def outlet(self) -> int:
        if len(self.outlets) != 1:
            raise UnsupportedError(f"network has {len(self.outlets)} outlets; this operation needs exactly one")
        return self.outlets[0]

    @property
    def seg_area(self) -> np.ndarray:
        return 0.25 * np.pi * self.seg_dh ** 2

    @property
    def elem_area(self) -> np.ndarray:
        return self.seg_area[self.elem_seg]

    @property
    def elem_mid(self) -> np.ndarray:
        return 0.5 * (self.nodes[self.elem_a] + self.nodes[self.elem_b])

    @property
    def elem_dir(self) -> np.ndarray:
        return self.seg_dir[self.elem_seg]

    def incidence(self, v: int) -> tuple[list[int], list[int]]:
        """``(I_minus, I_plus)``: segments leaving and entering vertex ``v``."""
        out = [int(j) for j in np.flatnonzero(self.seg_first == v)]
        inc = [int(j) for j in np.flatnonzero(self.seg_second == v)]
        return out, inc

    def node_arclength(self, seg: int) -> np.ndarray:
        nodes = self.nodes[list(self.seg_nodes[seg])]
        return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(nodes, axis=0), axis=1))])

    def total_length(self) -> float:
        return float(self.seg_length.sum())


def build_network(vertices: Sequence, segments: Sequence, inlet: int, outlets: int | Sequence[int],
                  *, h: float | None = None, n_elements: int | Sequence[int] | None = None,
                  D_h: float | Sequence[float] = 1.0, names: Sequence[str] = ()) -> PipeNetwork:
    """Validate a vertex/segment list and mesh every segment.

    ``segments`` holds ``(first, second)`` vertex index pairs; flow direction is
    first -> second.  Mesh density is either a target size ``h`` (each segment
    gets ``ceil(L/h)`` elements) or explicit ``n_elements``.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2 or len(V) < 2:
        raise ConfigError("vertices must be an (n, 2) array with n >= 2")
    S = np.asarray(segments, dtype=np.int64)
    if S.ndim != 2 or S.shape[1] != 2 or len(S) == 0:
        raise ConfigError("segments must be a non-empty list of (first, second) pairs")
    nv, ns = len(V), len(S)
    if np.any(S < 0) or np.any(S >= nv):
        raise ConfigError("segment endpoint references an undeclared vertex")
    outlets = (int(outlets),) if np.isscalar(outlets) else tuple(int(o) for o in outlets)
    if not (0 <= inlet < nv) or any(not (0 <= o < nv) for o in outlets) or not outlets:
        raise ConfigError("inlet/outlet must reference declared vertices")
    if inlet in outlets:
        raise ConfigError("inlet and outlet must differ")

    first, second = S[:, 0], S[:, 1]
    vec = V[second] - V[first]
    length = np.linalg.norm(vec, axis=1)
    if np.any(length <= 1e-12):
        bad = int(np.flatnonzero(length <= 1e-12)[0])
        raise ConfigError(f"segment {bad} has zero length")
    direction = vec / length[:, None]

    degree = np.bincount(np.concatenate([first, second]), minlength=nv)
    if degree[inlet] != 1 or np.count_nonzero(first == inlet) != 1:
        raise ConfigError("the inlet vertex must start exactly one segment")
    for o in outlets:
        if degree[o] != 1 or np.count_nonzero(second == o) != 1:
            raise ConfigError(f"outlet vertex {o} must end exactly one segment")
    for v in range(nv):
        if degree[v] == 0:
            raise ConfigError(f"vertex {v} is not used by any segment")
        if degree[v] == 1 and v != inlet and v not in outlets:
            raise ConfigError(f"dangling junction at vertex {v}")

    # connectivity (undirected) from the inlet
    adj = [[] for _ in range(nv)]
    for a, b in S:
        adj[a].append(b)
        adj[b].append(a)
    seen = {inlet}
    queue = deque([inlet])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != nv:
        raise ConfigError(f"network is disconnected: vertices {sorted(set(range(nv)) - seen)} unreachable from inlet")

    if n_elements is None:
        if h is None:
            raise ConfigError("give either h or n_elements")
        if not h > 0:
            raise ConfigError("mesh size h must be positive")
        nel = np.maximum(1, np.ceil(length / h - 1e-9)).astype(np.int64)
    else:
        nel = np.broadcast_to(np.asarray(n_elements, dtype=np.int64), (ns,)).copy()
        if np.any(nel < 1):
            raise ConfigError("every segment needs at least one element")
    dh = np.broadcast_to(np.asarray(D_h, dtype=float), (ns,)).copy()
    if np.any(dh <= 0):
        raise ConfigError("hydraulic diameters must be positive")

    nodes = [V]
    a_list, b_list, seg_list, h_list = [], [], [], []
    seg_elems, seg_nodes = [], []
    nxt = nv
    for j in range(ns):
        n = int(nel[j])
        t = np.arange(1, n) / n
        inner = V[first[j]] + t[:, None] * vec[j]
        nodes.append(inner)
        ids = [int(first[j])] + list(range(nxt, nxt + n - 1)) + [int(second[j])]
        nxt += n - 1
        e0 = len(a_list)
        a_list.extend(ids[:-1])
        b_list.extend(ids[1:])
        seg_list.extend([j] * n)
        h_list.extend([length[j] / n] * n)
        seg_elems.append(np.arange(e0, e0 + n))
        seg_nodes.append(np.asarray(ids, dtype=np.int64))

    return PipeNetwork(
        vertices=V, seg_first=first.copy(), seg_second=second.copy(), seg_length=length,
        seg_dir=direction, seg_dh=dh, seg_nel=nel, inlet=int(inlet), outlets=outlets,
        nodes=np.vstack(nodes), elem_a=np.asarray(a_list, dtype=np.int64),
        elem_b=np.asarray(b_list, dtype=np.int64), elem_seg=np.asarray(seg_list, dtype=np.int64),
        elem_h=np.asarray(h_list, dtype=float), seg_elems=tuple(seg_elems), seg_nodes=tuple(seg_nodes),
        names=tuple(names),
    )


# boundary data ----------------------------------------------------------------

@dataclass(frozen=True)
class NodeDirichlet:
    value: float


@dataclass(frozen=True)
class NodeFlux:
    """Flux entering the network through this node (negative = leaving)."""
    inflow: float


@dataclass(frozen=True)
class NodeRobin:
    """Flux leaving the network equals ``coeff * u`` (advective outflow for ``coeff = beta``)."""
    coeff: float


NodeBC = NodeDirichlet | NodeFlux | NodeRobin


@dataclass
class NetworkProblem1D:
    """Per-element coefficients of ``-eps u' + beta u = J + g``, ``J' + gamma u = f``.

    ``node_source`` and ``node_reaction`` are optional lumped nodal terms,
    already integrated over each node's dual cell (flux units); they enter the
    Kirchhoff row of the node as ``+ node_reaction * u - node_source``.
    """

    eps: np.ndarray
    beta: np.ndarray
    g: np.ndarray
    f: np.ndarray
    bcs: Mapping[int, NodeBC]
    gamma: np.ndarray | None = None
    node_source: np.ndarray | None = None
    node_reaction: np.ndarray | None = None

    def __post_init__(self):
        self.eps = np.asarray(self.eps, dtype=float)
        n = self.eps.size
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (n,)).copy()
        self.g = np.broadcast_to(np.asarray(self.g, dtype=float), (n,)).copy()
        self.f = np.broadcast_to(np.asarray(self.f, dtype=float), (n,)).copy()
        gamma = 0.0 if self.gamma is None else self.gamma
        self.gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,)).copy()
        if np.any(self.eps < 0):
            raise NumericalError("diffusion coefficient eps must be nonnegative")
        if np.any(self.gamma < 0):
            raise NumericalError("reaction coefficient must be nonnegative")
        if self.node_reaction is not None and np.any(np.asarray(self.node_reaction) < 0):
            raise NumericalError("nodal reaction must be nonnegative")

    @classmethod
    def uniform(cls, net: PipeNetwork, *, eps=1.0, beta=0.0, g=0.0, f=0.0, bcs=None) -> "NetworkProblem1D":
        """Per-segment (or scalar) data broadcast onto elements."""
        def per_elem(v):
            v = np.asarray(v, dtype=float)
            if v.ndim == 0:
                return np.full(net.n_elements, float(v))
            if v.shape == (net.n_segments,):
                return v[net.elem_seg]
            if v.shape == (net.n_elements,):
                return v.copy()
            raise ValueError(f"coefficient shape {v.shape} matches neither segments nor elements")
        return cls(eps=per_elem(eps), beta=per_elem(beta), g=per_elem(g), f=per_elem(f), bcs=dict(bcs or {}))


def coercivity_margin(problem: NetworkProblem1D, net: PipeNetwork) -> float:
    """Minimum discrete ``d(beta/eps)/ds`` over consecutive elements of each segment.

    A negative value means the sufficient coercivity condition is violated; it is
    reported, not enforced.
    """
    worst = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ab = np.where(problem.eps > 0, problem.beta / problem.eps, np.nan)
    for elems in net.seg_elems:
        e = np.asarray(elems)
        if e.size < 2:
            continue
        vals = ab[e]
        if np.any(np.isnan(vals)):
            continue
        d = np.diff(vals) / (0.5 * (net.elem_h[e[1:]] + net.elem_h[e[:-1]]))
        worst = min(worst, float(d.min()))
    return worst


def _effective_eps(problem: NetworkProblem1D, net: PipeNetwork, upwind: bool) -> np.ndarray:
    eps, beta = problem.eps, problem.beta
    if upwind:
        if np.any((eps == 0) & (beta == 0)):
            k = int(np.flatnonzero((eps == 0) & (beta == 0))[0])
            raise NumericalError(f"degenerate element {k}: eps = beta = 0")
        return eps + 0.5 * np.abs(beta) * net.elem_h
    if np.any(eps == 0):
        raise UnsupportedError("eps = 0 needs upwind stabilisation (hyperbolic problem without stabilization)")
    return eps


def _element_coeffs(problem, net, upwind):
    """``J_k = A_k u_a + B_k u_b - g_k``.

    With upwinding, ``(eps + |beta| h/2)/h +- beta/2`` is written as
    ``eps/h + max(+-beta, 0)`` so the signs of the coefficients are exact.
    """
    _effective_eps(problem, net, upwind)  # validation
    d = problem.eps / net.elem_h
    beta = problem.beta
    if upwind:
        return d + np.maximum(beta, 0.0), -d - np.maximum(-beta, 0.0)
    return d + 0.5 * beta, -d + 0.5 * beta


@dataclass
class PMSystem:
    """Reduced nodal system; iterating yields ``(M, F)``."""

    M: sp.csr_matrix
    F: np.ndarray
    free: np.ndarray  # node index of each unknown
    fixed: dict = field(default_factory=dict)  # node -> Dirichlet value
    n_nodes: int = 0

    def __iter__(self):
        yield self.M
        yield self.F

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_nodes)
        for node, val in self.fixed.items():
            u[node] = val
        u[self.free] = u_free
        return u


def assemble_pm(problem: NetworkProblem1D, net: PipeNetwork, upwind: bool = True) -> PMSystem:
    """Kirchhoff-row assembly; Dirichlet nodes are eliminated into ``F``."""
    nn = net.n_nodes
    if problem.eps.size != net.n_elements:
        raise ValueError("problem size does not match the network mesh")
    A, B = _element_coeffs(problem, net, upwind)
    a, b = net.elem_a, net.elem_b
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([A, B, -A, -B])
    F = np.zeros(nn)
    np.add.at(F, a, problem.g)
    np.add.at(F, b, -problem.g)
    half = 0.5 * net.elem_h
    np.add.at(F, a, problem.f * half)
    np.add.at(F, b, problem.f * half)
    # lumped reaction
    react = problem.gamma * half
    rows = np.concatenate([rows, a, b])
    cols = np.concatenate([cols, a, b])
    vals = np.concatenate([vals, react, react])
    if problem.node_source is not None:
        F += np.asarray(problem.node_source, dtype=float)
    if problem.node_reaction is not None:
        idx = np.arange(nn)
        rows = np.concatenate([rows, idx])
        cols = np.concatenate([cols, idx])
        vals = np.concatenate([vals, np.asarray(problem.node_reaction, dtype=float)])

    fixed = {}
    for node, bc in problem.bcs.items():
        node = int(node)
        if isinstance(bc, NodeDirichlet):
            fixed[node] = float(bc.value)
        elif isinstance(bc, NodeFlux):
            F[node] += bc.inflow
        elif isinstance(bc, NodeRobin):
            rows = np.append(rows, node)
            cols = np.append(cols, node)
            vals = np.append(vals, bc.coeff)
        else:
            raise ValueError(f"unknown node condition {bc!r}")

    M = sp.coo_matrix((vals, (rows, cols)), shape=(nn, nn)).tocsr()
    M.sum_duplicates()
    is_free = np.ones(nn, dtype=bool)
    if fixed:
        fidx = np.fromiter(fixed.keys(), dtype=np.int64)
        fval = np.fromiter(fixed.values(), dtype=float)
        is_free[fidx] = False
        uf = np.zeros(nn)
        uf[fidx] = fval
        F = F - M @ uf
    free = np.flatnonzero(is_free)
    return PMSystem(M=M[free][:, free].tocsr(), F=F[free], free=free, fixed=fixed, n_nodes=nn)


def recover_element_fluxes(u: np.ndarray, problem: NetworkProblem1D, net: PipeNetwork,
                           upwind: bool = True) -> np.ndarray:
    """Element fluxes along the segment direction from full nodal values ``u``."""
    A, B = _element_coeffs(problem, net, upwind)
    u = np.asarray(u, dtype=float)
    return A * u[net.elem_a] + B * u[net.elem_b] - problem.g


def nodal_residuals(u: np.ndarray, J: np.ndarray, problem: NetworkProblem1D, net: PipeNetwork) -> np.ndarray:
    """``sum_out J - sum_in J - f h/2 + gamma u h/2 - boundary`` at every node (Dirichlet nodes zeroed)."""
    r = np.zeros(net.n_nodes)
    half = 0.5 * net.elem_h
    np.add.at(r, net.elem_a, J - problem.f * half + problem.gamma * half * u[net.elem_a])
    np.add.at(r, net.elem_b, -J - problem.f * half + problem.gamma * half * u[net.elem_b])
    if problem.node_source is not None:
        r -= problem.node_source
    if problem.node_reaction is not None:
        r += problem.node_reaction * u
    for node, bc in problem.bcs.items():
        if isinstance(bc, NodeDirichlet):
            r[node] = 0.0
        elif isinstance(bc, NodeFlux):
            r[node] -= bc.inflow
        elif isinstance(bc, NodeRobin):
            r[node] += bc.coeff * u[node]
    return r


def solve_pm(problem: NetworkProblem1D, net: PipeNetwork, upwind: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Solve the nodal system; return full nodal ``u`` and element fluxes."""
    system = assemble_pm(problem, net, upwind)
    M = sp.csc_matrix(system.M)
    if M.shape[0] == 0:
        u = system.expand(np.zeros(0))
        return u, recover_element_fluxes(u, problem, net, upwind)
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        raise RankDeficiencyError(f"network system is singular ({exc}); add a Dirichlet node") from exc
    uf = lu.solve(system.F)
    if not np.all(np.isfinite(uf)):
        raise RankDeficiencyError("network solve produced non-finite values")
    u = system.expand(uf)
    return u, recover_element_fluxes(u, problem, net, upwind)


# exact solution ----------------------------------------------------------------

def _bernoulli_weight(t, a):
    """``(e^{a t} - 1)/(e^a - 1)`` evaluated without overflow."""
    t = np.asarray(t, dtype=float)
    if abs(a) < 1e-12:
        return t
    if a > 0:
        return np.exp(a * (t - 1.0)) * np.expm1(-a * t) / np.expm1(-a)
    return np.expm1(a * t) / np.expm1(a)


def _bernoulli_weight_slope(t, a):
    t = np.asarray(t, dtype=float)
    if abs(a) < 1e-12:
        return np.ones_like(t)
    if a > 0:
        return a * np.exp(a * (t - 1.0)) / -np.expm1(-a)
    return a * np.exp(a * t) / np.expm1(a)


@dataclass(frozen=True)
class ExactNetworkSolution:
    net: PipeNetwork
    eps: np.ndarray  # per segment
    beta: np.ndarray
    vertex_values: np.ndarray
    flux: np.ndarray  # per segment

    @property
    def omega(self) -> float:
        """Value at the (single) junction vertex."""
        junctions = [v for v in range(self.net.n_vertices)
                     if v != self.net.inlet and v not in self.net.outlets]
        if len(junctions) != 1:
            raise UnsupportedError("omega is defined for networks with a single junction")
        return float(self.vertex_values[junctions[0]])

    def u(self, seg: int, s):
        L = self.net.seg_length[seg]
        a = self.beta[seg] * L / self.eps[seg]
        u0 = self.vertex_values[self.net.seg_first[seg]]
        uL = self.vertex_values[self.net.seg_second[seg]]
        w = _bernoulli_weight(np.asarray(s) / L, a)
        return u0 * (1.0 - w) + uL * w

    def du(self, seg: int, s):
        L = self.net.seg_length[seg]
        a = self.beta[seg] * L / self.eps[seg]
        u0 = self.vertex_values[self.net.seg_first[seg]]
        uL = self.vertex_values[self.net.seg_second[seg]]
        return (uL - u0) * _bernoulli_weight_slope(np.asarray(s) / L, a) / L


def exact_network_solution(net: PipeNetwork, eps, beta, boundary_values: Mapping[int, float]) -> ExactNetworkSolution:
    """Closed-form solution for per-segment constant ``eps > 0``, ``beta`` and ``f = g = 0``.

    Every terminal vertex needs a Dirichlet value.  Junction values follow from
    flux continuity with segment fluxes ``(eps/L)[B(-a) u(0) - B(a) u(L)]``,
    ``a = beta L / eps``.
    """
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (net.n_segments,)).copy()
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (net.n_segments,)).copy()
    if np.any(eps <= 0):
        raise UnsupportedError("exact solution needs eps > 0 on every segment")
    terminals = [net.inlet, *net.outlets]
    if set(boundary_values) != set(terminals):
        raise UnsupportedError("boundary values must be given at exactly the inlet and outlet vertices")
    L = net.seg_length
    a = beta * L / eps
    cf = eps / L * np.asarray(bernoulli(-a))  # coefficient of u(first)
    cs = eps / L * np.asarray(bernoulli(a))   # coefficient of u(second)
    nv = net.n_vertices
    Kmat = np.zeros((nv, nv))
    rhs = np.zeros(nv)
    for j in range(net.n_segments):
        p, q = net.seg_first[j], net.seg_second[j]
        # J_j = cf u_p - cs u_q leaves p and enters q
        Kmat[p, p] += cf[j]
        Kmat[p, q] -= cs[j]
        Kmat[q, p] -= cf[j]
        Kmat[q, q] += cs[j]
    for v, val in boundary_values.items():
        Kmat[v, :] = 0.0
        Kmat[v, v] = 1.0
        rhs[v] = val
    vals = np.linalg.solve(Kmat, rhs)
    flux = cf * vals[net.seg_first] - cs * vals[net.seg_second]
    return ExactNetworkSolution(net=net, eps=eps, beta=beta, vertex_values=vals, flux=flux)


def three_segment_omega(eps: float, beta: Sequence[float], L: Sequence[float] = (1.0, 1.0, 1.0),
                        u0: float = 1.0, uL2: float = 0.0, uL3: float = 0.0) -> float:
    """Junction value of the inlet -> junction -> two outlets tree, in closed form."""
    b1, b2, b3 = beta
    L1, L2, L3 = L
    B = bernoulli
    num = (eps / L1 * B(-b1 * L1 / eps) * u0 + eps / L2 * B(b2 * L2 / eps) * uL2
           + eps / L3 * B(b3 * L3 / eps) * uL3)
    den = eps / L1 * B(b1 * L1 / eps) + eps / L2 * B(-b2 * L2 / eps) + eps / L3 * B(-b3 * L3 / eps)
    return float(num / den)


def three_segment_network(h: float | None = None, n_elements=None, L=(1.0, 1.0, 1.0)) -> PipeNetwork:
    """Inlet -> junction, then two branches to separate outlets."""
    L1, L2, L3 = L
    s = np.sqrt(0.5)
    verts = [(0.0, 0.0), (L1, 0.0), (L1 + L2 * s, L2 * s), (L1 + L3 * s, -L3 * s)]
    return build_network(verts, [(0, 1), (1, 2), (1, 3)], inlet=0, outlets=(2, 3),
                         h=h, n_elements=n_elements)


def network_errors(net: PipeNetwork, exact: ExactNetworkSolution, u: np.ndarray, J: np.ndarray,
                   n_quad: int = 5) -> dict:
    """H1 error of ``u_h`` (piecewise linear) and L2 error of ``J_h`` (piecewise constant)."""
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    l2u = h1u = l2j = 0.0
    normu = normj = 0.0
    for seg, elems in enumerate(net.seg_elems):
        s_nodes = net.node_arclength(seg)
        node_ids = net.seg_nodes[seg]
        for i, k in enumerate(elems):
            s0, s1 = s_nodes[i], s_nodes[i + 1]
            hk = s1 - s0
            sq = 0.5 * (s0 + s1) + 0.5 * hk * xg
            wq = 0.5 * hk * wg
            ua, ub = u[node_ids[i]], u[node_ids[i + 1]]
            uh = ua + (ub - ua) * (sq - s0) / hk
            duh = (ub - ua) / hk
            ue = exact.u(seg, sq)
            due = exact.du(seg, sq)
            l2u += np.sum(wq * (ue - uh) ** 2)
            h1u += np.sum(wq * (due - duh) ** 2)
            l2j += hk * (J[k] - exact.flux[seg]) ** 2
            normu += np.sum(wq * (ue ** 2 + due ** 2))
            normj += hk * exact.flux[seg] ** 2
    seg_flux_err = np.array([np.max(np.abs(J[list(el)] - exact.flux[s])) for s, el in enumerate(net.seg_elems)])
    return {
        "u_H1": float(np.sqrt(l2u + h1u)),
        "u_L2": float(np.sqrt(l2u)),
        "J_L2": float(np.sqrt(l2j)),
        "J_rel_max": float(np.max(seg_flux_err / np.maximum(np.abs(exact.flux), 1e-300))),
        "u_H1_rel": float(np.sqrt((l2u + h1u) / normu)),
        "J_L2_rel": float(np.sqrt(l2j / normj)),
    }


# coolant flow -------------------------------------------------------------------

@dataclass
class FluidState:
    """Coolant state on the network.

    Nodal: ``phi``, ``H`` and the inverted ``T_node``, ``x_node``,
    ``regime_node``.  Per element: ``G``, ``W``, ``p`` and the properties
    ``rho``, ``mu``, ``x`` taken from the upstream node, plus ``T_c`` (mean of
    the two nodal temperatures, the value the wall exchanges heat with).
    """

    phi: np.ndarray
    H: np.ndarray
    G: np.ndarray
    W: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    T_c: np.ndarray
    x: np.ndarray
    mu: np.ndarray
    regime: np.ndarray
    T_node: np.ndarray | None = None
    x_node: np.ndarray | None = None
    regime_node: np.ndarray | None = None
    clamp_count: int = 0

    @classmethod
    def uniform(cls, net: PipeNetwork, *, T: float, x: float, rho: float, mu: float, p: float,
                H: float, G: float = 0.0) -> "FluidState":
        ne, nn = net.n_elements, net.n_nodes
        return cls(phi=np.full(nn, p), H=np.full(nn, H), G=np.full(ne, G), W=np.full(ne, G * H),
                   rho=np.full(ne, rho), p=np.full(ne, p), T_c=np.full(ne, T), x=np.full(ne, x),
                   mu=np.full(ne, mu), regime=np.zeros(ne, dtype=np.int64), T_node=np.full(nn, T),
                   x_node=np.full(nn, x), regime_node=np.zeros(nn, dtype=np.int64))

    def copy(self) -> "FluidState":
        return FluidState(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})

    def upstream_node(self, net: PipeNetwork) -> np.ndarray:
        return np.where(self.G >= 0, net.elem_a, net.elem_b)

    def element_H(self, net: PipeNetwork) -> np.ndarray:
        """Upstream nodal enthalpy per element, consistent with the upwind enthalpy flux."""
        return self.H[self.upstream_node(net)]


def node_average(net: PipeNetwork, values: np.ndarray) -> np.ndarray:
    """Mean of the element values adjacent to each node."""
    acc = np.zeros(net.n_nodes)
    cnt = np.zeros(net.n_nodes)
    np.add.at(acc, net.elem_a, values)
    np.add.at(acc, net.elem_b, values)
    np.add.at(cnt, net.elem_a, 1.0)
    np.add.at(cnt, net.elem_b, 1.0)
    return acc / np.maximum(cnt, 1.0)


@dataclass(frozen=True)
class FlowBC:
    p_inlet: float
    G_tot: float
    H_inlet: float


FrictionModel = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def blasius_friction(G, rho, mu, D_h, G_floor: float = 1e-3):
    """Blasius resistance at the smoothed magnitude ``sqrt(G^2 + G_floor^2)``.

    Keeps ``R > 0`` at ``G = 0`` (so the nodal system stays invertible) and is
    smooth, which the Newton linearisation of ``R(G) G`` relies on.
    """
    from .twophase import blasius_resistance
    return blasius_resistance(np.hypot(G, G_floor), rho, mu, D_h)


def blasius_laminar_friction(G, rho, mu, D_h):
    """Larger of the laminar (64/Re) and Blasius resistances."""
    from .twophase import blasius_resistance, laminar_resistance
    return np.maximum(laminar_resistance(rho, mu, D_h), blasius_resistance(G, rho, mu, D_h))


FRICTION_MODELS = {"blasius": blasius_friction, "blasius_laminar": blasius_laminar_friction}


@dataclass(frozen=True)
class MomentumResult:
    phi: np.ndarray
    G: np.ndarray
    mdot: np.ndarray
    p: np.ndarray
    R: np.ndarray
    iterations: int
    history: list
    residual: np.ndarray  # nodal mass residual with the final resistances


def _friction_slope(fric, G, rho, mu, D, rel: float = 1e-6):
    """``R`` and ``d(R G)/dG`` by a symmetric relative difference (``R`` at ``G = 0``)."""
    R = fric(G, rho, mu, D)
    aG = np.abs(G)
    dG = rel * np.maximum(aG, 1e-3)
    hi = fric(aG + dG, rho, mu, D) * (aG + dG)
    lo = fric(np.maximum(aG - dG, 0.0), rho, mu, D) * np.maximum(aG - dG, 0.0)
    slope = np.where(aG > 0, (hi - lo) / np.where(aG > 0, (aG + dG) - np.maximum(aG - dG, 0.0), 1.0), R)
    return R, np.maximum(slope, R * 1e-3)


def solve_mass_momentum(net: PipeNetwork, state: FluidState, bc: FlowBC,
                        friction: FrictionModel | str = "blasius", *, gravity=GRAVITY,
                        tol: float = 1e-10, max_iter: int = 100, method: str = "newton",
                        damping: float = 0.5) -> MomentumResult:
    """Solve ``d(phi)/ds = -R G + rho g.d`` with Kirchhoff mass balance.

    Mapping onto the nodal scheme: ``u = phi``, ``J = mdot = G A``,
    ``eps = A/R``, ``beta = 0``, ``g = -eps rho g.d``.  The inlet node holds
    ``phi = p_inlet`` and the outlet node withdraws ``G_tot A_outlet``; this fixes
    the same solution as prescribing the flow at both ends and shifting ``phi``
    so that ``phi(inlet) = p_inlet``.

    ``method="newton"`` linearises ``psi(G) = R(G) G`` about the current ``G``
    (conductance ``A / psi'(G)``, the correction folded into ``g``), which
    converges quadratically; ``method="picard"`` lags ``R`` with ``damping``.
    """
    fric = FRICTION_MODELS[friction] if isinstance(friction, str) else friction
    if method not in ("newton", "picard"):
        raise ValueError(f"unknown momentum method {method!r}")
    A = net.elem_area
    D = net.seg_dh[net.elem_seg]
    gd = net.elem_dir @ np.asarray(gravity, dtype=float)
    out_seg = net.seg_elems[int(np.flatnonzero(net.seg_second == net.outlet)[0])]
    mdot_tot = bc.G_tot * net.seg_area[net.elem_seg[out_seg[-1]]]
    # solve for phi - p_inlet: friction drops are tiny next to the absolute pressure
    bcs = {net.inlet: NodeDirichlet(0.0), net.outlet: NodeFlux(-mdot_tot)}
    body = state.rho * gd

    G = state.G.copy()
    if not np.any(G):
        G = np.full(net.n_elements, bc.G_tot)
    history = []
    best = np.inf
    for it in range(1, max_iter + 1):
        if method == "newton":
            R, dpsi = _friction_slope(fric, G, state.rho, state.mu, D)
            # G(s) ~ G + (s - R G) / psi'  with driving force s = -dphi/ds + rho g.d
            eps = A / dpsi
            g = -(eps * body + A * G - eps * R * G)
        else:
            R = fric(G, state.rho, state.mu, D)
            eps = A / R
            g = -eps * body
        if np.any(~np.isfinite(eps)) or np.any(eps <= 0):
            raise NumericalError("friction model returned a nonpositive or non-finite resistance")
        prob = NetworkProblem1D(eps=eps, beta=0.0, g=g, f=0.0, bcs=bcs)
        dphi, mdot = solve_pm(prob, net, upwind=False)
        G_new = mdot / A
        change = float(np.max(np.abs(G_new - G)) / max(abs(bc.G_tot), 1e-300))
        history.append(change)
        if method == "picard" and it > 1:
            G_new = damping * G_new + (1.0 - damping) * G
        G = G_new
        if change <= tol:
            break
        # Newton at round-off level: the change stops shrinking
        if method == "newton" and change < 1e3 * tol and change >= 0.5 * best:
            break
        best = min(best, change)
    else:
        raise IterationError(f"mass-momentum iteration did not converge in {max_iter} steps "
                             f"(last change {history[-1]:.3e})", history=history)
    G = mdot / A
    R = fric(G, state.rho, state.mu, D)
    # residual of the converged nonlinear balance, evaluated with the secant resistance
    eps_s = A / R
    prob_s = NetworkProblem1D(eps=eps_s, beta=0.0, g=-eps_s * body, f=0.0, bcs=bcs)
    mdot_s = recover_element_fluxes(dphi, prob_s, net, upwind=False)
    res = nodal_residuals(dphi, mdot_s, prob_s, net)
    phi = dphi + bc.p_inlet
    phi_el = 0.5 * (phi[net.elem_a] + phi[net.elem_b])
    p = phi_el - G ** 2 / state.rho
    return MomentumResult(phi=phi, G=G, mdot=mdot, p=p, R=R, iterations=it, history=history, residual=res)


@dataclass(frozen=True)
class EnergyResult:
    H: np.ndarray
    W: np.ndarray  # enthalpy flux per unit area, per element
    E: np.ndarray  # enthalpy flow mdot*H, per element
    source: np.ndarray  # heat gained per node [W] (negative = released)
    regularized: int
    residual: np.ndarray  # nodal enthalpy-flow residual


def node_conductance(net: PipeNetwork, h_wc) -> np.ndarray:
    """``sum over adjacent elements of h_wc * h/2`` per node [W/K]."""
    h = np.broadcast_to(np.asarray(h_wc, dtype=float), (net.n_elements,))
    w = np.zeros(net.n_nodes)
    np.add.at(w, net.elem_a, 0.5 * h * net.elem_h)
    np.add.at(w, net.elem_b, 0.5 * h * net.elem_h)
    return w


def solve_energy(net: PipeNetwork, mdot: np.ndarray, T_w: np.ndarray, T_c: np.ndarray, h_wc,
                 H_inlet: float, *, dTc_dH=None, H_prev=None, eps_min_rel: float = 1e-10) -> EnergyResult:
    """Upwind solve of ``d(mdot H)/ds = h_wc (T_w - T_c)`` per unit length.

    ``T_w`` is per element, the coolant temperature ``T_c`` per node (lumped
    quadrature of the exchange term, the same rule the scheme uses for
    reactions).  With a nodal slope ``dTc_dH`` the source is linearised about
    ``H_prev`` as ``T_c + dTc_dH (H - H_prev)``, which adds a nonnegative
    diagonal and makes repeated solves a Newton iteration for ``T_c(H)``.  The
    inlet carries ``H = H_inlet``; the outlet is a pure outflow.
    """
    mdot = np.asarray(mdot, dtype=float)
    h = np.broadcast_to(np.asarray(h_wc, dtype=float), mdot.shape)
    T_c = np.asarray(T_c, dtype=float)
    if T_c.shape != (net.n_nodes,):
        raise ValueError(f"T_c must be nodal with shape ({net.n_nodes},), got {T_c.shape}")
    ref = max(float(np.max(np.abs(mdot))), 1e-300)
    stagnant = np.abs(mdot) < 1e-8 * ref
    eps = np.where(stagnant, eps_min_rel * ref * net.total_length(), 0.0)
    if np.any(stagnant):
        log.warning("energy solve: %d stagnant elements regularised with eps_min", int(stagnant.sum()))
    wn = node_conductance(net, h)
    # heat from the wall per node: sum of h_wc T_w h/2 over adjacent elements
    tw = 0.5 * h * net.elem_h * np.asarray(T_w, dtype=float)
    q_wall = np.zeros(net.n_nodes)
    np.add.at(q_wall, net.elem_a, tw)
    np.add.at(q_wall, net.elem_b, tw)
    src = q_wall - wn * T_c
    react = np.zeros(net.n_nodes)
    if dTc_dH is not None:
        react = wn * np.asarray(dTc_dH, dtype=float)
        src = src + react * np.asarray(H_prev, dtype=float)
    out_elem = net.seg_elems[int(np.flatnonzero(net.seg_second == net.outlet)[0])][-1]
    bcs = {net.inlet: NodeDirichlet(H_inlet), net.outlet: NodeRobin(max(float(mdot[out_elem]), 0.0))}
    prob = NetworkProblem1D(eps=eps, beta=mdot, g=0.0, f=0.0, bcs=bcs, node_source=src, node_reaction=react)
    H, E = solve_pm(prob, net, upwind=True)
    return EnergyResult(H=H, W=E / net.elem_area, E=E, source=src - react * H, regularized=int(stagnant.sum()),
                        residual=nodal_residuals(H, E, prob, net))
