"""Homogeneous two-phase closures: saturation properties, mixture rules, state inversion.

Temperature is the primary saturation variable.  Properties come from a
plain-text table (one row per temperature) and are interpolated linearly, so
``p_sat`` and ``H_L`` are piecewise linear in ``T`` and their inverses are
exact on the same breakpoints.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError, InversionError, PropertyRangeError

_COLUMNS = ("T", "rho_l", "rho_v", "h_l", "h_v", "p_sat", "mu_l", "mu_v")
DEFAULT_TABLE = "r245fa_approx.txt"


@dataclass(frozen=True)
class SaturationModel:
    """Tabulated saturation curve over ``[T_min, T_max]``.

    Table format: ``#`` comment lines (an optional ``critical_pressure_Pa = <value>``
    line is honoured), then whitespace-separated rows
    ``T rho_L rho_V H_L H_V p_sat mu_L mu_V`` in SI units with strictly
    increasing ``T``.
    """

    table: np.ndarray
    p_crit: float = float("nan")
    name: str = "custom"

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[1] != len(_COLUMNS) or t.shape[0] < 2:
            raise ValueError(f"saturation table must have {len(_COLUMNS)} columns and >= 2 rows")
        object.__setattr__(self, "table", t)
        self.validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "SaturationModel":
        path = Path(path)
        text = path.read_text()
        m = re.search(r"critical_pressure_Pa\s*=\s*([0-9.eE+-]+)", text)
        return cls(np.loadtxt(path, comments="#"), float(m.group(1)) if m else float("nan"), path.stem)

    @classmethod
    def default(cls) -> "SaturationModel":
        ref = resources.files("thermosyphon") / "data" / DEFAULT_TABLE
        with resources.as_file(ref) as p:
            return cls.from_file(p)

    @property
    def T_min(self) -> float:
        return float(self.table[0, 0])

    @property
    def T_max(self) -> float:
        return float(self.table[-1, 0])

    def validate(self, samples: int = 1000) -> None:
        """Check monotone T, p_sat increasing, rho_L > rho_V > 0 and positive latent heat."""
        T = self.table[:, 0]
        if np.any(np.diff(T) <= 0):
            raise ValueError("saturation table temperatures must be strictly increasing")
        Ts = np.linspace(self.T_min, self.T_max, samples)
        rl, rv = self.rho_l(Ts), self.rho_v(Ts)
        if np.any(rv <= 0) or np.any(rl <= rv):
            raise ValueError("saturation table violates rho_L > rho_V > 0")
        if np.any(self.h_v(Ts) <= self.h_l(Ts)):
            raise ValueError("saturation table has nonpositive latent heat")
        if np.any(np.diff(self.p_sat(Ts)) <= 0) or np.any(np.diff(self.table[:, 5]) <= 0):
            raise ValueError("saturation pressure must be strictly increasing in T")
        if np.any(np.diff(self.table[:, 3]) <= 0):
            raise ValueError("liquid enthalpy must be strictly increasing in T")
        if np.any(self.table[:, 6:] <= 0):
            raise ValueError("viscosities must be positive")

    def _check(self, T):
        T = np.asarray(T, dtype=float)
        if np.any(~np.isfinite(T)) or np.any(T < self.T_min - 1e-9) or np.any(T > self.T_max + 1e-9):
            bad = T[(T < self.T_min) | (T > self.T_max) | ~np.isfinite(T)]
            raise PropertyRangeError(
                f"temperature {bad.ravel()[0]!r} K outside [{self.T_min}, {self.T_max}] K")
        return T

    def _col(self, j, T):
        T = self._check(T)
        out = np.interp(T, self.table[:, 0], self.table[:, j])
        return out if out.ndim else float(out)

    def rho_l(self, T):
        return self._col(1, T)

    def rho_v(self, T):
        return self._col(2, T)

    def h_l(self, T):
        return self._col(3, T)

    def h_v(self, T):
        return self._col(4, T)

    def p_sat(self, T):
        return self._col(5, T)

    def mu_l(self, T):
        return self._col(6, T)

    def mu_v(self, T):
        return self._col(7, T)

    def T_sat(self, p):
        """Inverse of ``p_sat`` (exact for the piecewise-linear interpolant)."""
        p = np.asarray(p, dtype=float)
        ps = self.table[:, 5]
        if np.any(~np.isfinite(p)) or np.any(p < ps[0] * (1 - 1e-12)) or np.any(p > ps[-1] * (1 + 1e-12)):
            raise PropertyRangeError(f"pressure outside [{ps[0]:.6g}, {ps[-1]:.6g}] Pa")
        out = np.interp(p, ps, self.table[:, 0])
        return out if out.ndim else float(out)

    def T_from_liquid_enthalpy(self, h):
        """Temperature whose saturated-liquid enthalpy equals ``h``."""
        h = np.asarray(h, dtype=float)
        hl = self.table[:, 3]
        if np.any(h < hl[0]) or np.any(h > hl[-1]):
            raise InversionError(f"liquid enthalpy outside tabulated range [{hl[0]:.6g}, {hl[-1]:.6g}] J/kg")
        out = np.interp(h, hl, self.table[:, 0])
        return out if out.ndim else float(out)


def _check_quality(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(~np.isfinite(x)):
        raise DomainError("vapor quality must lie in [0, 1]")
    return x


def mixture_density(T, x, sat: SaturationModel):
    """Homogeneous density ``rho_V rho_L / (rho_V (1 - x) + rho_L x)``."""
    x = _check_quality(x)
    rl, rv = sat.rho_l(T), sat.rho_v(T)
    return rv * rl / (rv * (1.0 - x) + rl * x)


def mixture_enthalpy(T, x, sat: SaturationModel):
    x = _check_quality(x)
    return sat.h_l(T) * (1.0 - x) + sat.h_v(T) * x


def mixture_viscosity(T, x, sat: SaturationModel):
    """McAdams form ``1/mu = x/mu_V + (1 - x)/mu_L``."""
    x = _check_quality(x)
    return 1.0 / (x / sat.mu_v(T) + (1.0 - x) / sat.mu_l(T))


SATURATED, SUBCOOLED, SUPERHEATED = 0, 1, 2


@dataclass(frozen=True)
class StateInversion:
    T: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    regime: np.ndarray  # SATURATED / SUBCOOLED / SUPERHEATED per entry

    @property
    def subcooled(self) -> np.ndarray:
        return self.regime == SUBCOOLED

    @property
    def superheated(self) -> np.ndarray:
        return self.regime == SUPERHEATED


def invert_state(H, sat: SaturationModel, *, T_hint=None, p_hint=None) -> StateInversion:
    """Recover ``(T_c, x, rho, p)`` from specific enthalpy.

    The saturation temperature is ``T_hint`` if given, otherwise ``T_sat(p_hint)``.
    Inside the dome ``x = (H - H_L)/(H_V - H_L)`` and ``p = p_sat(T)``.  Below the
    liquid line the state is subcooled liquid: ``x = 0`` and ``T`` solves
    ``H_L(T) = H``.  Above the vapor line ``x`` is clamped to 1 (superheated flag).
    """
    if (T_hint is None) == (p_hint is None):
        raise ValueError("pass exactly one of T_hint, p_hint")
    H = np.atleast_1d(np.asarray(H, dtype=float))
    if np.any(~np.isfinite(H)):
        raise InversionError("non-finite enthalpy")
    Ts = sat._check(T_hint) if T_hint is not None else sat.T_sat(p_hint)
    Ts = np.broadcast_to(np.asarray(Ts, dtype=float), H.shape).copy()
    hl, hv = sat.h_l(Ts), sat.h_v(Ts)
    x = (H - hl) / (hv - hl)
    regime = np.full(H.shape, SATURATED, dtype=np.int64)
    T = Ts.copy()

    sub = x < 0
    if np.any(sub):
        T[sub] = sat.T_from_liquid_enthalpy(H[sub])
        regime[sub] = SUBCOOLED
    sup = x > 1
    regime[sup] = SUPERHEATED
    x = np.clip(x, 0.0, 1.0)
    rho = mixture_density(T, x, sat)
    p = np.asarray(sat.p_sat(T), dtype=float)
    return StateInversion(T=T, x=x, rho=np.asarray(rho), p=p, regime=regime)


# correlations

def blasius_resistance(G, rho, mu, D_h):
    """Resistance per unit length ``R`` with ``dp/ds = R G``.

    ``R = f |G| / (2 D_h rho)`` with the Blasius factor ``f = 0.3164 Re^-0.25``,
    ``Re = |G| D_h / mu``; equivalently ``R`` scales like ``|G|^0.75``.
    """
    G = np.abs(np.asarray(G, dtype=float))
    if np.any(np.asarray(D_h) <= 0) or np.any(np.asarray(mu) <= 0):
        raise DomainError("Blasius resistance needs D_h > 0 and mu > 0")
    # |G| * Re^-0.25 = |G|^0.75 (D_h/mu)^-0.25 stays finite at G = 0
    return 0.3164 * G ** 0.75 * (np.asarray(D_h) / np.asarray(mu)) ** -0.25 / (2.0 * D_h * np.asarray(rho))


def laminar_resistance(rho, mu, D_h):
    """Hagen-Poiseuille ``R = 32 mu / (rho D_h^2)`` (``f = 64/Re``)."""
    return 32.0 * np.asarray(mu) / (np.asarray(rho) * np.asarray(D_h) ** 2)


def shah_baseline_h(h_l, x, p_reduced):
    """Baseline Shah film-condensation coefficient."""
    x = _check_quality(x)
    pr = np.asarray(p_reduced, dtype=float)
    if np.any(pr <= 0) or np.any(pr >= 1):
        raise DomainError("reduced pressure must lie in (0, 1)")
    return h_l * ((1.0 - x) ** 0.8 + 3.8 * x ** 0.76 * (1.0 - x) ** 0.04 / pr ** 0.38)


def dittus_boelter_h(G, D_h, mu, k, pr):
    """Liquid-only single-phase coefficient ``0.023 Re^0.8 Pr^0.4 k / D_h``."""
    re = np.abs(G) * D_h / mu
    return 0.023 * re ** 0.8 * pr ** 0.4 * k / D_h


def natural_convection_velocity(delta_T, T_ref, gap, nu=1.6e-5, g=9.81):
    """Buoyancy-driven mean velocity in a vertical plate channel, ``g (dT/T) s^2 / (12 nu)``."""
    if np.any(np.asarray(T_ref) <= 0):
        raise DomainError("reference temperature must be positive")
    return g * np.maximum(np.asarray(delta_T, dtype=float), 0.0) / T_ref * gap ** 2 / (12.0 * nu)
