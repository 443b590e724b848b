"""Scenario configuration: nested dataclasses, TOML round-trip and device presets."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from .coupling import CondenserSetup, CouplingConfig
from .errors import ConfigError
from .mesh2d import build_grid
from .pipenet import FRICTION_MODELS, build_network
from .reduction import ReductionSpec, SHAPES, reduction_coefficients
from .twophase import SaturationModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GridConfig:
    nx: int = 90
    ny: int = 40
    W: float = 0.45
    H: float = 0.2


@dataclass(frozen=True)
class ReductionConfig:
    S: float = 0.05
    beta_exp: float = 0.9
    Z: str = "constant"
    B: str = "constant"
    panel_half_thickness: float = 0.0006
    n_points: int = 64


@dataclass(frozen=True)
class AirConfig:
    T_in: float = 298.15
    V: float = 1.0
    velocity_model: str = "constant"  # or "natural"
    rho: float = 1.184
    cp: float = 1006.0
    k0: float = 0.0262
    u0: float = 300.0


@dataclass(frozen=True)
class PanelConfig:
    k_w: float = 200.0
    h_aw: float = 1.1


@dataclass(frozen=True)
class NetworkConfig:
    preset: str = "deviceA"
    n_channels: int = 0  # 0 = preset default
    D_h: float = 0.0033
    h: float = 0.01
    vertices: tuple = ()
    segments: tuple = ()
    inlet: int = 0
    outlet: int = 0
    names: tuple = ()


@dataclass(frozen=True)
class CoolantConfig:
    T0: float = 358.15
    x_inlet: float = 1.0
    G_tot: float = 5.8
    h_wc: float = 3.0
    friction: str = "blasius"
    p_inlet: float | None = None
    property_file: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "deviceA"
    schema_version: int = SCHEMA_VERSION
    stabilization: str = "sg"
    gravity: tuple = (0.0, -9.81)
    output_dir: str = "out"
    grid: GridConfig = field(default_factory=GridConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    air: AirConfig = field(default_factory=AirConfig)
    panel: PanelConfig = field(default_factory=PanelConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    coolant: CoolantConfig = field(default_factory=CoolantConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)

    def validate(self) -> "ScenarioConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        g, c, a = self.grid, self.coolant, self.air
        if g.nx < 1 or g.ny < 1 or not (g.W > 0 and g.H > 0):
            raise ConfigError("grid needs nx, ny >= 1 and positive W, H")
        if self.stabilization not in ("sg", "upwind"):
            raise ConfigError(f"stabilization must be 'sg' or 'upwind', got {self.stabilization!r}")
        if not 0.0 <= c.x_inlet <= 1.0:
            raise ConfigError("inlet quality must lie in [0, 1]")
        if c.G_tot <= 0 or c.h_wc < 0 or self.panel.h_aw < 0:
            raise ConfigError("G_tot must be positive and heat-transfer coefficients nonnegative")
        if c.friction not in FRICTION_MODELS:
            raise ConfigError(f"unknown friction model {c.friction!r}; choose from {sorted(FRICTION_MODELS)}")
        if a.velocity_model not in ("constant", "natural"):
            raise ConfigError(f"unknown air velocity model {a.velocity_model!r}")
        if self.reduction.Z not in SHAPES or self.reduction.B not in SHAPES:
            raise ConfigError(f"shape presets must be one of {sorted(SHAPES)}")
        if not c.T0 > a.T_in:
            raise ConfigError("coolant temperature must exceed the air inlet temperature")
        if self.network.preset not in PRESETS and self.network.preset != "custom":
            raise ConfigError(f"unknown network preset {self.network.preset!r}; choose from {sorted(PRESETS)} or 'custom'")
        if len(self.gravity) != 2:
            raise ConfigError("gravity must be a 2-vector")
        return self


# (de)serialisation -----------------------------------------------------------------

def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if getattr(obj, f.name) is not None}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if name in _NESTED.get(cls, {}) else None
        sub = _NESTED.get(cls, {}).get(name)
        if sub is not None:
            kwargs[name] = _from_plain(sub, value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = _freeze(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


_NESTED = {ScenarioConfig: {"grid": GridConfig, "reduction": ReductionConfig, "air": AirConfig,
                            "panel": PanelConfig, "network": NetworkConfig, "coolant": CoolantConfig,
                            "coupling": CouplingConfig}}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return _to_plain(cfg)


def config_from_dict(data: dict) -> ScenarioConfig:
    cfg = _from_plain(ScenarioConfig, data, "")
    return _normalise(cfg).validate()


def _normalise(cfg: ScenarioConfig) -> ScenarioConfig:
    """Coerce numeric fields so that TOML ints/floats compare equal after a round trip."""
    def fix(obj):
        changes = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                changes[f.name] = fix(v)
            elif f.type in ("float", "float | None") and isinstance(v, int) and not isinstance(v, bool):
                changes[f.name] = float(v)
        return dataclasses.replace(obj, **changes)
    return fix(cfg)


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return config_from_dict(data)


def load(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return loads(path.read_text())


def save(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))


# network presets ----------------------------------------------------------------------
# Geometries are stylised approximations of the three harp layouts and an
# 11-channel horizontal panel; coordinates are in metres on the W x H panel.

def _channel_heights(n: int, H: float, lo: float = 0.15, hi: float = 0.85):
    return np.linspace(lo * H, hi * H, n)


def _u_type(W: float, H: float, n: int, drop: float = 0.0, reverse_return: bool = False):
    """Parallel channels fed by a right-hand riser and drained by a left-hand header.

    ``drop`` lowers the left end of every channel (inclined channels);
    ``reverse_return`` makes the collecting header run upwards and return the
    condensate through a separate downcomer at the far left edge.
    """
    xr, xl, y_in = 0.93 * W, 0.07 * W, 0.03 * H
    ys = _channel_heights(n, H)
    V, S, names = [], [], []
    inlet = 0
    V.append((xr, y_in))
    R = [len(V) + k for k in range(n)]
    V += [(xr, y) for y in ys]
    L = [len(V) + k for k in range(n)]
    V += [(xl, y - drop) for y in ys]
    S.append((inlet, R[0])); names.append("inlet")
    for k in range(n - 1):
        S.append((R[k], R[k + 1])); names.append(f"riser_{k}")
    for k in range(n):
        S.append((R[k], L[k])); names.append(f"channel_{k}")
    if not reverse_return:
        for k in range(n - 1, 0, -1):
            S.append((L[k], L[k - 1])); names.append(f"collector_{k - 1}")
        out = len(V)
        V.append((xl, y_in - 0.0))
        S.append((L[0], out)); names.append("outlet")
    else:
        for k in range(n - 1):
            S.append((L[k], L[k + 1])); names.append(f"collector_{k}")
        xd = 0.03 * W
        top = len(V)
        V.append((xd, ys[-1] - drop))
        out = len(V)
        V.append((xd, y_in))
        S.append((L[-1], top)); names.append("return_top")
        S.append((top, out)); names.append("outlet")
    return V, S, inlet, out, names


def preset_deviceA(W, H, n=6):
    """U-type harp with horizontal channels (shortest path through the lowest channel)."""
    return _u_type(W, H, n)


def preset_deviceB(W, H, n=6):
    """Reverse-return harp: every channel sees the same inlet-to-outlet path length."""
    return _u_type(W, H, n, reverse_return=True)


def preset_deviceC(W, H, n=6):
    """Channels inclined towards the collector so that gravity drains the condensate."""
    return _u_type(W, H, n, drop=0.1 * H)


def preset_horizontal11(W, H, n=11):
    """Eleven horizontal channels between a riser and a collector."""
    return _u_type(W, H, n)


PRESETS = {"deviceA": preset_deviceA, "deviceB": preset_deviceB, "deviceC": preset_deviceC,
           "horizontal11": preset_horizontal11}


def preset_config(name: str, **overrides) -> ScenarioConfig:
    """Table-1 style scenario for a named preset; ``overrides`` replace top-level sections."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = ScenarioConfig(name=name, network=NetworkConfig(preset=name))
    return dataclasses.replace(cfg, **overrides).validate()


def build_network_from_config(cfg: ScenarioConfig):
    nc, g = cfg.network, cfg.grid
    if nc.preset == "custom":
        if not nc.vertices or not nc.segments:
            raise ConfigError("custom network needs vertices and segments")
        V, S, inlet, outlet, names = nc.vertices, nc.segments, nc.inlet, nc.outlet, nc.names
    else:
        fn = PRESETS[nc.preset]
        V, S, inlet, outlet, names = fn(g.W, g.H, nc.n_channels) if nc.n_channels else fn(g.W, g.H)
    return build_network(V, S, inlet, outlet, h=nc.h, D_h=nc.D_h, names=tuple(names))


def build_setup(cfg: ScenarioConfig) -> CondenserSetup:
    """Turn a validated scenario into the solver inputs."""
    cfg.validate()
    r = cfg.reduction
    air_spec = ReductionSpec.from_names(S=r.S, beta_exp=r.beta_exp, Z=r.Z, B=r.B)
    lam1a, lam2a = reduction_coefficients(air_spec, r.n_points)
    sat = SaturationModel.from_file(cfg.coolant.property_file) if cfg.coolant.property_file \
        else SaturationModel.default()
    grid = build_grid(cfg.grid.nx, cfg.grid.ny, cfg.grid.W, cfg.grid.H)
    net = build_network_from_config(cfg)
    c, a = cfg.coolant, cfg.air
    return CondenserSetup(
        grid=grid, net=net, sat=sat, lam1a=lam1a, lam2a=lam2a, lam1w=r.panel_half_thickness,
        T_a_in=a.T_in, T0=c.T0, V_air=a.V, h_aw=cfg.panel.h_aw, h_wc=c.h_wc, G_tot=c.G_tot,
        k_w=cfg.panel.k_w, rho_air=a.rho, cp_air=a.cp, k0_air=a.k0, u0_air=a.u0, beta_exp=r.beta_exp,
        x_inlet=c.x_inlet, p_inlet=c.p_inlet, friction=c.friction, gravity=tuple(cfg.gravity),
        stabilization=cfg.stabilization, air_velocity_model=a.velocity_model, air_gap=r.S)
