"""Scenario configuration: TOML (or JSON) file -> nested dataclasses.

Every table is optional except ``system``.  Unknown keys are rejected so
typos surface as errors instead of silently falling back to defaults.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .geometry import Obstacle, annulus_channel, crescent, disk, ellipse, no_obstacle, polynomial_obstacle, rectangle
from .lotka import LVParams, lv_system
from .systems import SystemDef, cubic_pair, polynomial_system


@dataclass
class SystemCfg:
    kind: str = "cubic_pair"  # cubic_pair | lv | polynomial
    a: float = 0.25
    m: int = 2
    D: Optional[list] = None
    k1: float = 1.1
    k2: float = 2.0
    r: float = 1.0
    d: float = 1.0
    frame: str = "cooperative"  # lv output frame: cooperative | original
    terms: Optional[list] = None  # polynomial: per component, list of [coef, [powers...]]


@dataclass
class FrontCfg:
    h: float = 0.05
    half_width: Optional[float] = 30.0
    tol_res: float = 1e-9


@dataclass
class DomainCfg:
    rect: tuple = (-25.0, 10.0, -12.0, 12.0)
    h: float = 0.2
    far_field: str = "front-pinned"
    neumann_mode: str = "mirror"


@dataclass
class ObstacleCfg:
    kind: str = "none"  # none | disk | ellipse | rectangle | annulus_channel | crescent | polynomial
    r: float = 1.0
    center: tuple = (0.0, 0.0)
    a: float = 2.0
    b: float = 1.0
    width: float = 4.0
    height: float = 2.0
    r_in: float = 2.0
    r_out: float = 3.0
    slit: float = 0.1
    r_cut: float = 0.8
    offset: float = 1.2
    coeffs: Optional[list] = None  # polynomial: list of [i, j, coef]
    bound_radius: float = 1.0


@dataclass
class RunCfg:
    t_end: float = 80.0
    shift: float = -8.0  # the half level starts at x1 = -shift and moves left
    snapshot_every: float = 2.0
    write_snapshots: bool = False
    level: float = 0.5


@dataclass
class EntireCfg:
    distances: tuple = (20.0, 30.0, 40.0)  # start offsets n = distance / c
    init_mode: str = "front"
    t_end: float = 0.0
    margin: float = 5.0
    shift: float = 0.0


@dataclass
class LimitCfg:
    window: tuple = (-10.0, 10.0, -10.0, 10.0)
    relax_time: float = 200.0
    tol: float = 1e-5
    gap_window: tuple = (-10.0, 10.0)  # range of x1 + c t + shift for the post-passage gap


@dataclass
class VerifyCfg:
    samples: int = 100_000
    safety: float = 2.0
    tol_rel: float = 1e-3
    candidates: tuple = ("growing", "expanding", "decaying")


@dataclass
class SweepCfg:
    k1: tuple = (1.1, 1.5, 2.0)
    k2: tuple = (2.0, 3.0)
    r: tuple = (1.0,)
    d: tuple = (1.0,)
    speed_tol: float = 1e-3


@dataclass
class Config:
    system: SystemCfg
    front: FrontCfg = field(default_factory=FrontCfg)
    domain: DomainCfg = field(default_factory=DomainCfg)
    obstacle: ObstacleCfg = field(default_factory=ObstacleCfg)
    run: RunCfg = field(default_factory=RunCfg)
    entire: EntireCfg = field(default_factory=EntireCfg)
    limit: LimitCfg = field(default_factory=LimitCfg)
    verify: VerifyCfg = field(default_factory=VerifyCfg)
    sweep: SweepCfg = field(default_factory=SweepCfg)
    seed: int = 0
    label: str = "scenario"

    def as_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @property
    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TABLES = {f.name: f.type for f in fields(Config)}
_CLASSES = {"system": SystemCfg, "front": FrontCfg, "domain": DomainCfg, "obstacle": ObstacleCfg, "run": RunCfg,
            "entire": EntireCfg, "limit": LimitCfg, "verify": VerifyCfg, "sweep": SweepCfg}


def _build(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"config-parse: [{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, val in table.items():
        if key not in known:
            raise ConfigError(f"config-parse: unknown field '{where}.{key}'")
        default = known[key].default
        if isinstance(default, tuple) and isinstance(val, list):
            val = tuple(val)
        kw[key] = val
    return cls(**kw)


def config_from_dict(data: dict) -> Config:
    if "system" not in data:
        raise ConfigError("config-parse: missing field 'system'")
    kw = {}
    for key, val in data.items():
        if key in _CLASSES:
            kw[key] = _build(_CLASSES[key], val, key)
        elif key in ("seed", "label"):
            kw[key] = val
        else:
            raise ConfigError(f"config-parse: unknown field '{key}'")
    cfg = Config(**kw)
    if cfg.system.kind not in ("cubic_pair", "lv", "polynomial"):
        raise ConfigError(f"config-parse: system.kind must be cubic_pair, lv or polynomial (got {cfg.system.kind!r})")
    return cfg


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``table.key=value`` strings (values parsed as TOML literals, else kept as strings)."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"config-parse: override {item!r} is not key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config-parse: override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(val.strip())
    return data


def load_config(path, overrides=()) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config-parse: cannot read {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config-parse: {path}: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides))


# ------------------------------------------------------------ factories


def make_system(cfg: SystemCfg) -> SystemDef:
    if cfg.kind == "cubic_pair":
        return cubic_pair(a=cfg.a, m=cfg.m, D=cfg.D)
    if cfg.kind == "lv":
        return lv_system(LVParams(cfg.k1, cfg.k2, cfg.r, cfg.d))
    if cfg.terms is None or cfg.D is None:
        raise ConfigError("config-parse: polynomial system needs fields 'system.terms' and 'system.D'")
    terms = [[(float(c), tuple(int(p) for p in pw)) for c, pw in comp] for comp in cfg.terms]
    return polynomial_system(terms, cfg.D)


def make_obstacle(cfg: ObstacleCfg) -> Obstacle:
    k = cfg.kind
    if k == "none":
        return no_obstacle()
    if k == "disk":
        return disk(cfg.r, cfg.center)
    if k == "ellipse":
        return ellipse(cfg.a, cfg.b)
    if k == "rectangle":
        return rectangle(cfg.width, cfg.height)
    if k == "annulus_channel":
        return annulus_channel(cfg.r_in, cfg.r_out, cfg.slit)
    if k == "crescent":
        return crescent(cfg.r, cfg.r_cut, cfg.offset)
    if k == "polynomial":
        if not cfg.coeffs:
            raise ConfigError("config-parse: polynomial obstacle needs field 'obstacle.coeffs'")
        return polynomial_obstacle({(int(i), int(j)): float(c) for i, j, c in cfg.coeffs}, cfg.bound_radius)
    raise ConfigError(f"config-parse: unknown obstacle.kind {k!r}")
