"""Configuration loading and validation.

One versioned JSON document holds every tunable: vehicle parameters, the
road-surface table, controller gains, mode periods, guard thresholds, and
numeric settings.  The shipped default config is the single auditable home
for all model-default choices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import ConfigError
from .plant import RoadSurface, VehicleParams
from .discretization import PidGains
from .scheduler import AccRatePolicy
from .supervisor import GuardTable, ModeId, SamplingMode, validate_mode_table

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Numerics:
    backend: str = "as-printed"       # linearization backend
    discretize: str = "zoh"           # plant discretization for closed loops
    rest_speed: float = 0.5           # m/s; below this the vehicle is stopped
    mb_max: float = 4000.0            # N m, actuator clamp
    t_max: float = 60.0               # s, scenario time cap
    substeps: int = 10                # plant substeps per control period
    lambda_d: float = 0.2             # desired slip
    unit_circle_eps: float = 1e-9

    def __post_init__(self):
        if self.backend not in ("as-printed", "full-jacobian"):
            raise ConfigError(f"unknown linearization backend {self.backend!r}")
        if self.discretize not in ("zoh", "euler"):
            raise ConfigError(f"unknown discretization {self.discretize!r}")
        if self.substeps < 1 or self.t_max <= 0 or self.mb_max <= 0:
            raise ConfigError("invalid numeric settings")


@dataclass(frozen=True)
class SlipContrastSettings:
    """Coarse-vs-fine sampling contrast experiment."""

    v0: float = 100.0                 # km/h
    coarse_T: float = 1.0             # s
    fine_T: float = 0.01              # s
    gains: PidGains = field(default_factory=lambda: PidGains(Kp=10000.0, Ki=20000.0, Kd=5.0))
    v_floor: float = 11.0             # m/s; samples below are excluded


@dataclass(frozen=True)
class Config:
    vehicle: VehicleParams
    surfaces: dict
    gains: PidGains
    modes: dict
    guard_table: GuardTable
    debounce: int
    wcet: float
    acc_enabled: bool
    acc_policy: AccRatePolicy
    acc_gains: tuple
    numerics: Numerics
    slip_contrast: SlipContrastSettings
    start_mode: ModeId = ModeId.N0
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        validate_mode_table(self.modes)
        if self.debounce < 1:
            raise ConfigError("debounce length must be at least 1")
        if self.wcet <= 0 or self.wcet > self.modes[ModeId.E].period:
            raise ConfigError("wcet must be positive and at most the emergency period")

    def surface(self, name: str) -> RoadSurface:
        try:
            return self.surfaces[name]
        except KeyError:
            raise ConfigError(f"unknown road surface {name!r}; "
                              f"known: {sorted(self.surfaces)}") from None

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _require(doc: dict, key: str) -> object:
    if key not in doc:
        raise ConfigError(f"config missing required key {key!r}")
    return doc[key]


def from_dict(doc: dict) -> Config:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema version {doc.get('schema_version')!r}")
    try:
        veh = _require(doc, "vehicle")
        vehicle = VehicleParams(m=veh["m"], R=veh["R"], J_w=veh["J_w"], F_N=veh["F_N"])
        surfaces = {name: RoadSurface(name, s["alpha"], s.get("beta", 0.0))
                    for name, s in _require(doc, "surfaces").items()}
        g = _require(doc, "gains")
        gains = PidGains(Kp=g["Kp"], Ki=g["Ki"], Kd=g["Kd"])
        modes = {ModeId(k): SamplingMode(ModeId(k), v)
                 for k, v in _require(doc, "modes").items()}
        gt = doc.get("guards", {})
        guard_table = GuardTable(
            v1=gt.get("v1", 85.0), v2=gt.get("v2", 140.0),
            v1_down=gt.get("v1_down", 80.0), v2_down=gt.get("v2_down", 135.0),
            bpp_cuts=tuple(gt.get("bpp_cuts", (0.25, 0.5, 0.75))))
        acc = doc.get("acc", {})
        policy = AccRatePolicy(fast=acc.get("fast", 5.0e-4),
                               slow=acc.get("slow", 2.0e-3),
                               wcet=acc.get("wcet", doc.get("wcet", 2.0e-5)))
        num = doc.get("numerics", {})
        numerics = Numerics(**{k: num[k] for k in num
                               if k in Numerics.__dataclass_fields__})
        sc = doc.get("slip_contrast", {})
        sc_gains = sc.get("gains")
        slip_contrast = SlipContrastSettings(
            v0=sc.get("v0", 100.0),
            coarse_T=sc.get("coarse_T", 1.0),
            fine_T=sc.get("fine_T", 0.01),
            gains=PidGains(**sc_gains) if sc_gains else SlipContrastSettings().gains,
            v_floor=sc.get("v_floor", 11.0))
        return Config(
            vehicle=vehicle, surfaces=surfaces, gains=gains, modes=modes,
            guard_table=guard_table,
            debounce=int(doc.get("debounce", 3)),
            wcet=float(doc.get("wcet", 2.0e-5)),
            acc_enabled=bool(acc.get("enabled", True)),
            acc_policy=policy,
            acc_gains=tuple(acc.get("gains", (0.8, 0.1))),
            numerics=numerics,
            slip_contrast=slip_contrast,
            start_mode=ModeId(doc.get("start_mode", "N0")),
            raw=doc)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load(path=None) -> Config:
    """Load a config file, or the shipped default when no path is given."""
    if path is None:
        text = resources.files("mmctrl.data").joinpath("default-config.json").read_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(doc)
