"""Experiment configuration, domain builders and report serialization."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Any

from . import geometry as g
from .sde import SimConfig

MODES = ("estimate", "sweep", "oracle", "fit", "localize")
FORMATS = ("csv", "json")
DOMAINS = ("HalfPlane2D", "Strip2D", "Rectangle2D", "Disk2D", "Annulus", "HalfSpaceND",
           "HalfBallND")
# partitions whose epsilon is the target size; their dt is capped at DT_SCALE * eps^2
EPS_PARTITIONS = ("thm51", "disk_target")
DT_SCALE = 0.1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "estimate"
    domain: str = "Strip2D"
    dim: int = 2
    L: float = 1.0
    l: float = 1.0
    radius: float = 1.0
    r_inner: float = 0.1
    r_outer: float = 1.0
    partition: str = "default"
    epsilon: float | None = None
    epsilon_list: tuple[float, ...] = ()
    interval: tuple[float, ...] = ()
    arc: tuple[float, ...] = ()
    absorb_radius: float | None = None
    start: tuple[float, ...] = (-0.3, 0.0)
    dt: float = 1e-4
    max_time: float = 1e10
    bridge_correction: bool = True
    sphere_jumps: bool = True
    jump_factor: float = 4.0
    master_seed: int = 0
    n_paths: int = 10_000
    confidence: float = 0.95
    output_format: str = "json"
    check_oracle: bool = True
    fit_source: str = "oracle"
    rows_file: str | None = None
    r1: float = 0.5
    r2: float = 0.25
    c3_epsilons: tuple[float, ...] = ()
    c3_k1: float = 2.0
    grid: tuple[str, ...] = ()
    grid_h: float = 0.1

    def __post_init__(self):
        for name in ("epsilon_list", "interval", "arc", "start", "c3_epsilons", "grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.output_format not in FORMATS:
            raise ConfigError(f"output_format must be one of {FORMATS}")
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}")
        if self.n_paths <= 0:
            raise ConfigError("n_paths must be positive")
        if not self.dt > 0 or not self.max_time > 0:
            raise ConfigError("dt and max_time must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must lie in [0, 2**64)")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")
        eps = self.epsilon_list
        if any(not e > 0 for e in eps):
            raise ConfigError("epsilon_list entries must be positive")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon_list must be strictly decreasing")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.fit_source not in ("oracle", "mc", "rows"):
            raise ConfigError("fit_source must be oracle, mc or rows")
        if self.fit_source == "rows" and self.mode == "fit" and not self.rows_file:
            raise ConfigError("fit_source 'rows' needs rows_file")
        if not 0 < self.r2 < self.r1:
            raise ConfigError("need 0 < r2 < r1")

    def sim_config(self, dt: float | None = None) -> SimConfig:
        return SimConfig(dt=self.dt if dt is None else dt, max_time=self.max_time,
                         bridge_correction=self.bridge_correction, master_seed=self.master_seed,
                         n_paths=self.n_paths, sphere_jumps=self.sphere_jumps,
                         jump_factor=self.jump_factor)

    def epsilons(self) -> tuple[float, ...]:
        if self.epsilon_list:
            return self.epsilon_list
        if self.epsilon is not None:
            return (self.epsilon,)
        return ()

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in dataclasses.fields(self)}

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kw[k] = _coerce(k, names[k], v)
        try:
            return ExperimentConfig(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def _coerce(name: str, f: dataclasses.Field, v: Any) -> Any:
    t = str(f.type)
    try:
        if v is None:
            if "None" in t:
                return None
            raise ConfigError(f"{name} may not be null")
        if t.startswith("tuple"):
            if not isinstance(v, (list, tuple)):
                raise ConfigError(f"{name} must be a list")
            return tuple(str(x) for x in v) if "str" in t else tuple(float(x) for x in v)
        if t.startswith("bool"):
            if not isinstance(v, bool):
                raise ConfigError(f"{name} must be true or false")
            return v
        if t.startswith("int"):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
                raise ConfigError(f"{name} must be an integer")
            return int(v)
        if t.startswith("float"):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number")
            return float(v)
        if t.startswith("str"):
            if not isinstance(v, str):
                raise ConfigError(f"{name} must be a string")
            return v
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {name}: {v!r}") from None
    return v


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(data)


# builders

def build_domain(cfg: ExperimentConfig) -> g.Domain:
    try:
        if cfg.domain == "HalfPlane2D":
            return g.HalfPlane2D()
        if cfg.domain == "Strip2D":
            return g.Strip2D(cfg.L)
        if cfg.domain == "Rectangle2D":
            return g.Rectangle2D(cfg.L, cfg.l)
        if cfg.domain == "Disk2D":
            return g.Disk2D(cfg.radius)
        if cfg.domain == "Annulus":
            return g.Annulus(cfg.dim, cfg.r_inner, cfg.r_outer)
        if cfg.domain == "HalfSpaceND":
            return g.HalfSpaceND(cfg.dim)
        return g.HalfBallND(cfg.dim, cfg.radius)
    except g.GeometryError as exc:
        raise ConfigError(str(exc)) from None


_DEFAULT_PARTITION = {"HalfPlane2D": "thm51", "Strip2D": "strip", "Rectangle2D": "rectangle",
                      "Disk2D": "arc", "Annulus": "shells", "HalfSpaceND": "disk_target",
                      "HalfBallND": "disk_target"}


def partition_name(cfg: ExperimentConfig) -> str:
    return _DEFAULT_PARTITION[cfg.domain] if cfg.partition == "default" else cfg.partition


def build_partition(cfg: ExperimentConfig, domain: g.Domain,
                    eps: float | None) -> g.BoundaryPartition:
    name = partition_name(cfg)
    try:
        if name in EPS_PARTITIONS and eps is None:
            raise ConfigError(f"partition {name!r} needs epsilon or epsilon_list")
        if name == "thm51" and isinstance(domain, g.HalfPlane2D):
            part = g.thm51_partition(eps)
        elif name == "interval" and isinstance(domain, g.HalfPlane2D):
            if len(cfg.interval) != 2:
                raise ConfigError("interval partition needs interval = [a, b]")
            part = g.interval_partition(*cfg.interval)
        elif name == "strip" and isinstance(domain, g.Strip2D):
            part = g.strip_partition()
        elif name == "rectangle" and isinstance(domain, g.Rectangle2D):
            part = g.rectangle_partition(domain)
        elif name == "arc" and isinstance(domain, g.Disk2D):
            if len(cfg.arc) != 2:
                raise ConfigError("arc partition needs arc = [theta_lo, theta_hi]")
            part = g.disk_arc_partition(*cfg.arc)
        elif name == "shells" and isinstance(domain, g.Annulus):
            part = g.annulus_partition()
        elif name == "disk_target" and isinstance(domain, (g.HalfSpaceND, g.HalfBallND)):
            ar = math.inf if cfg.absorb_radius is None else cfg.absorb_radius
            part = g.disk_target_partition(domain, eps, ar)
        else:
            raise ConfigError(f"partition {name!r} does not apply to {cfg.domain}")
        part.validate(domain)
        return part
    except g.GeometryError as exc:
        raise ConfigError(str(exc)) from None


def row_dt(cfg: ExperimentConfig, eps: float | None) -> float:
    if eps is not None and partition_name(cfg) in EPS_PARTITIONS:
        return min(cfg.dt, DT_SCALE * eps * eps)
    return cfg.dt


# reports

def fmt_float(x: float) -> str:
    """17 significant digits; non-finite values become null."""
    if not math.isfinite(x):
        return "null"
    out = f"{x:.17g}"
    if not any(c in out for c in ".en"):
        out += ".0"
    return out


def _encode(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _encode(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def dumps_report(cfg: ExperimentConfig, results: Any) -> str:
    """JSON with every float written to 17 significant digits."""
    payload = {"config": cfg.to_dict(), "results": _encode(results)}
    return _dump(payload) + "\n"


def _dump(v: Any, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(x, indent + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, list):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list)) for x in v):
            return "[" + ", ".join(_dump(x) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _dump(x, indent + 1) for x in v) + "\n" + end + "]"
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, int):
        return str(v)
    return json.dumps(v)


def loads_report(text: str) -> tuple[ExperimentConfig, Any]:
    data = json.loads(text)
    return ExperimentConfig.from_dict(data["config"]), data["results"]
