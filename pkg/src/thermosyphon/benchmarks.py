"""Validation benchmarks: 2D convergence study, sharp-layer problems and the three-segment network."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh2d import build_grid
from .mfv2d import AdrProblem2D, Dirichlet, StabilizationKind, ZeroTotalFlux, solve_problem
from .pipenet import (NetworkProblem1D, NodeDirichlet, exact_network_solution, network_errors, solve_pm,
                      three_segment_network, three_segment_omega)

ALPHAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)
NS = (4, 8, 16, 32, 64)


def fitted_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def pairwise_orders(h, err) -> list[float]:
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    return [float(v) for v in np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])]


# manufactured solution ----------------------------------------------------------------

def manufactured_error(N: int, alpha: float, kind: StabilizationKind | str) -> float:
    """Max-norm cell-centre error for ``u = cos x sin y`` on the unit square.

    ``beta = (0, 1)``, ``gamma = 1``; the source is the exact cell average of
    ``(2 alpha + 1) cos x sin y + cos x cos y``.
    """
    g = build_grid(N, N, 1.0, 1.0)
    xa, xb, ya, yb = g.xn[:-1], g.xn[1:], g.yn[:-1], g.yn[1:]
    cos_x = (np.sin(xb) - np.sin(xa)) / (xb - xa)
    sin_y = (np.cos(ya) - np.cos(yb)) / (yb - ya)
    cos_y = (np.sin(yb) - np.sin(ya)) / (yb - ya)
    f = ((2.0 * alpha + 1.0) * np.outer(sin_y, cos_x) + np.outer(cos_y, cos_x)).ravel()

    def exact(x, y):
        return np.cos(x) * np.sin(y)

    p = AdrProblem2D.build(g, alpha=alpha, beta=(0.0, 1.0), gamma=1.0, f=f,
                           bcs=lambda x, y, side: Dirichlet(exact(x, y)))
    u = solve_problem(p, g, kind)
    return float(np.max(np.abs(u - exact(g.centers[:, 0], g.centers[:, 1]))))


@dataclass
class ConvergenceTable:
    kind: str
    Ns: tuple
    errors: dict  # alpha -> list of errors
    orders: dict = field(default_factory=dict)  # alpha -> fitted order
    finest_orders: dict = field(default_factory=dict)  # alpha -> order of the last pair

    def format(self) -> str:
        head = f"{'alpha':>8} " + " ".join(f"N={N:<9d}" for N in self.Ns) + "   order  last-pair"
        lines = [f"[{self.kind}]", head]
        for a, e in self.errors.items():
            lines.append(f"{a:8.0e} " + " ".join(f"{v:<11.3e}" for v in e)
                         + f"  {self.orders[a]:6.3f}  {self.finest_orders[a]:6.3f}")
        return "\n".join(lines)


def convergence2d(kind: StabilizationKind | str = "sg", alphas=ALPHAS, Ns=NS) -> ConvergenceTable:
    kind = StabilizationKind.parse(kind)
    h = 1.0 / np.asarray(Ns, dtype=float)
    table = ConvergenceTable(kind.value, tuple(Ns), {})
    for a in alphas:
        e = [manufactured_error(N, a, kind) for N in Ns]
        table.errors[a] = e
        table.orders[a] = fitted_order(h, e)
        table.finest_orders[a] = pairwise_orders(h, e)[-1]
    return table


# sharp layers -------------------------------------------------------------------------

def layer_potential(x, y):
    """Piecewise potential in ``s = d + x``, ``d = |(x, y)|``: 0, then a ramp, then 0.2."""
    d = np.hypot(x, y)
    s = d + x
    return np.where(s < 0.55, 0.0, np.where(s < 0.65, 2.0 * (d - 0.55), 0.2))


def layer_problem(case: str, N: int = 64, alpha: float = 1e-6):
    """The two sharp-layer problems on the unit square with ``gamma = 0``.

    ``boundary``: ``f = 1``, ``beta = (-y, x)``, homogeneous Dirichlet data.
    ``interior``: ``f = 0``, ``beta = grad psi`` (discrete gradient of
    :func:`layer_potential`), Dirichlet data 0/1 on the left and bottom sides
    split at ``d + x = 0.65``, zero total flux on the top and right sides.
    """
    g = build_grid(N, N, 1.0, 1.0)
    if case == "boundary":
        p = AdrProblem2D.build(g, alpha=alpha, beta=lambda x, y: (-y, x), gamma=0.0, f=1.0,
                               bcs=lambda x, y, side: Dirichlet(0.0))
        return g, p, 1.0
    if case == "interior":
        def bcs(x, y, side):
            if side in ("left", "bottom"):
                return Dirichlet(0.0 if np.hypot(x, y) + x < 0.65 else 1.0)
            return ZeroTotalFlux()
        p = AdrProblem2D.build(g, alpha=alpha, gamma=0.0, f=0.0, bcs=bcs, potential=layer_potential)
        return g, p, 0.0
    raise ValueError(f"unknown layer case {case!r}; choose 'boundary' or 'interior'")


def dmp_bounds(problem: AdrProblem2D, f_sign: float) -> tuple[float, float]:
    """Bounds implied by the Dirichlet data and the sign of the source.

    A nonnegative source only lifts the solution (lower bound ``min(0, data)``),
    a nonpositive one only lowers it; with ``f = 0`` both data bounds apply.
    """
    lo, hi = problem.dirichlet_range()
    if f_sign > 0:
        return min(lo, 0.0), np.inf
    if f_sign < 0:
        return -np.inf, max(hi, 0.0)
    return lo, hi


@dataclass
class LayerResult:
    case: str
    kind: str
    u: np.ndarray
    bounds: tuple
    overshoot: float  # largest excursion outside the bounds (0 if none)
    grid: object = None

    @property
    def passed(self) -> bool:
        return self.overshoot <= 1e-12


def layers2d(case: str, kind: StabilizationKind | str = "sg", N: int = 64, alpha: float = 1e-6) -> LayerResult:
    kind = StabilizationKind.parse(kind)
    g, p, f_sign = layer_problem(case, N, alpha)
    u = solve_problem(p, g, kind)
    lo, hi = dmp_bounds(p, f_sign)
    over = max(float(lo - u.min()), float(u.max() - hi), 0.0)
    return LayerResult(case, kind.value, u, (lo, hi), over, g)


# three-segment network -------------------------------------------------------------------

NETWORK_BETA = (3.0, 2.0, 1.0)
NETWORK_DATA = {0: 1.0, 2: 0.0, 3: 0.0}
# first-order H1 behaviour needs the local Peclet number beta h / (2 eps) below one
NETWORK_H = {1.0: tuple(2.0 ** -k for k in range(2, 9)), 1.0 / 50: tuple(2.0 ** -k for k in range(7, 13))}


@dataclass
class NetworkTable:
    eps: float
    hs: tuple
    errors: list  # dicts from network_errors
    omega_exact: float
    omega_discrete: list
    orders: dict = field(default_factory=dict)

    def format(self) -> str:
        lines = [f"[eps = {self.eps:g}]  omega = {self.omega_exact:.10f}",
                 f"{'h':>10} {'|u-u_h|_V':>12} {'|J-J_h|_Q':>12} {'flux rel':>12} {'omega_h':>14}"]
        for h, e, w in zip(self.hs, self.errors, self.omega_discrete):
            lines.append(f"{h:10.3e} {e['u_H1']:12.4e} {e['J_L2']:12.4e} {e['J_rel_max']:12.4e} {w:14.10f}")
        lines.append("orders: " + ", ".join(f"{k} {v:.3f}" for k, v in self.orders.items()))
        return "\n".join(lines)


def network_problem(h: float, eps: float):
    net = three_segment_network(h=h)
    prob = NetworkProblem1D.uniform(net, eps=eps, beta=NETWORK_BETA,
                                    bcs={v: NodeDirichlet(val) for v, val in NETWORK_DATA.items()})
    return net, prob


def network_test(eps: float, hs=None, upwind: bool = True) -> NetworkTable:
    hs = tuple(hs) if hs is not None else NETWORK_H.get(eps, NETWORK_H[1.0])
    errs, omegas = [], []
    for h in hs:
        net, prob = network_problem(h, eps)
        exact = exact_network_solution(net, eps, NETWORK_BETA, NETWORK_DATA)
        u, J = solve_pm(prob, net, upwind)
        errs.append(network_errors(net, exact, u, J))
        omegas.append(float(u[1]))
    table = NetworkTable(eps, hs, errs, three_segment_omega(eps, NETWORK_BETA), omegas)
    for key in ("u_H1", "J_L2"):
        e = [d[key] for d in errs]
        if min(e) > 1e-12:  # flux errors at round-off carry no rate
            table.orders[key] = fitted_order(hs, e)
    return table


def network_profile(h: float, eps: float, upwind: bool = True) -> dict:
    """Nodal solution per segment (arclength, value) for plotting and monotonicity checks."""
    net, prob = network_problem(h, eps)
    u, _ = solve_pm(prob, net, upwind)
    return {seg: (net.node_arclength(seg), u[net.seg_nodes[seg]]) for seg in range(net.n_segments)}


def profile_is_monotone(values: np.ndarray, tol: float = 1e-14) -> bool:
    d = np.diff(values)
    return bool(np.all(d <= tol) or np.all(d >= -tol))
