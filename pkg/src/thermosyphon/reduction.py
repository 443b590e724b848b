"""Vertical averaging: reduction coefficients and effective 2D coefficients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NumericalError


def _one(z):
    return np.ones_like(z)


@dataclass(frozen=True)
class ShapeFunctions:
    """Named shape presets over ``z`` in ``[0, S/2]`` (``Z(0) = 1`` by construction)."""

    @staticmethod
    def constant(S: float) -> Callable:
        return _one

    @staticmethod
    def linear(S: float) -> Callable:
        return lambda z: 1.0 - 2.0 * np.asarray(z) / S

    @staticmethod
    def parabolic(S: float) -> Callable:
        """Plane Poiseuille profile ``6 (z/S)(1 - z/S)`` (mean 1 over the gap)."""
        return lambda z: 6.0 * (np.asarray(z) / S) * (1.0 - np.asarray(z) / S)


SHAPES = {"constant": ShapeFunctions.constant, "linear": ShapeFunctions.linear,
          "parabolic": ShapeFunctions.parabolic}


@dataclass(frozen=True)
class ReductionSpec:
    S: float = 0.05
    beta_exp: float = 0.9
    Z: Callable = field(default=_one)
    B: Callable = field(default=_one)
    k0: float = 0.0262
    u0: float = 300.0

    def __post_init__(self):
        if not self.S > 0:
            raise DomainError("pitch S must be positive")
        z0 = float(np.asarray(self.Z(np.array([0.0])))[0])
        if not np.isclose(z0, 1.0, rtol=0, atol=1e-12):
            raise DomainError(f"temperature shape must satisfy Z(0) = 1, got {z0}")

    @classmethod
    def from_names(cls, S=0.05, beta_exp=0.9, Z="constant", B="constant", **kw) -> "ReductionSpec":
        try:
            return cls(S=S, beta_exp=beta_exp, Z=SHAPES[Z](S), B=SHAPES[B](S), **kw)
        except KeyError as exc:
            raise ValueError(f"unknown shape preset {exc.args[0]!r}; choose from {sorted(SHAPES)}") from None


def composite_gauss(fn: Callable, a: float, b: float, n_points: int = 64, panels: int | None = None,
                    cluster: int = 3) -> float:
    """Composite Gauss-Legendre rule with ``n_points`` total nodes (8 per panel).

    With ``cluster = k > 0`` the panels are laid out in ``t`` with
    ``z = a + (b - a) t^k / (t^k + (1 - t)^k)``, which crowds nodes towards both
    ends.  Shapes that vanish at an end (``Z^(beta+1)`` with a linear ``Z``)
    then converge spectrally instead of algebraically; ``cluster = 0`` is the
    plain rule, exact for polynomials of degree 15.
    """
    per = 8
    panels = panels or max(1, n_points // per)
    xg, wg = np.polynomial.legendre.leggauss(per)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    if cluster > 0:
        k = cluster
        tk, sk = t ** k, (1.0 - t) ** k
        s = tk / (tk + sk)
        w = w * k * (t ** (k - 1) * sk + tk * (1.0 - t) ** (k - 1)) / (tk + sk) ** 2
        w = w / w.sum()  # integrate constants exactly
    else:
        s = t
    z = a + (b - a) * s
    vals = np.asarray(fn(z), dtype=float)
    if vals.shape != z.shape or not np.all(np.isfinite(vals)):
        raise NumericalError("shape function returned non-finite values on the quadrature nodes")
    return float((b - a) * np.sum(w * vals))


def reduction_coefficients(spec: ReductionSpec, n_points: int = 64) -> tuple[float, float]:
    """``lambda_1 = int_0^{S/2} Z^(beta+1)`` and ``lambda_2 = int_0^{S/2} Z B``."""
    half = 0.5 * spec.S
    lam1 = composite_gauss(lambda z: np.abs(spec.Z(z)) ** (spec.beta_exp + 1.0) * np.sign(spec.Z(z)),
                           0.0, half, n_points)
    lam2 = composite_gauss(lambda z: spec.Z(z) * spec.B(z), 0.0, half, n_points)
    if lam1 <= 0 or lam2 <= 0:
        raise NumericalError(f"reduction coefficients must be positive, got {lam1}, {lam2}")
    return lam1, lam2


def effective_coefficients(lam1: float, lam2: float, h: float, V):
    """``(h / lambda_1, (lambda_2 / lambda_1) V)``."""
    if not lam1 > 0:
        raise DomainError("lambda_1 must be positive")
    return h / lam1, (lam2 / lam1) * np.asarray(V, dtype=float)


def power_law_conductivity(k0: float, u0: float, beta_exp: float, T):
    """``k0 (T/u0)^beta``."""
    T = np.asarray(T, dtype=float)
    if u0 <= 0 or np.any(T <= 0):
        raise DomainError("power-law conductivity needs T > 0 and u0 > 0")
    out = k0 * (T / u0) ** beta_exp
    return out if out.ndim else float(out)
