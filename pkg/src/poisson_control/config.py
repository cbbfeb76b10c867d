"""JSON run configuration (schema version 1).

Example::

    {
      "version": 1,
      "model": {"type": "gbm", "mu": 0.05, "sigma": 0.2},
      "problem": {"r": 0.15, "lambda": 2.0, "gamma_d": 4.0, "gamma_u": 5.0,
                  "payoff": {"type": "power", "delta": 0.3}},
      "numerics": {"quad_abs_tol": 1e-10, "quad_rel_tol": 1e-9, "root_tol": 1e-12, "grid_points": 512},
      "sim": {"x0": 1.0, "n_paths": 4096, "seed": 0, "dt": 0.01, "tail_tol": 1e-4, "horizon": null, "workers": 1},
      "output": {"format": "csv", "path": null}
    }

``numerics``, ``sim`` and ``output`` are optional.  ``gamma_d < gamma_u`` is
deliberately not enforced here; it is item (i) of the assumption check.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .diffusion import GbmModel
from .errors import ConfigError
from .functionals import ControlProblem, Numerics, ProblemSpec
from .functions import PowerSum
from .montecarlo import SimConfig
from .resolvent import QuadratureSettings

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelBlock:
    mu: float
    sigma: float
    type: str = "gbm"


@dataclass(frozen=True)
class ProblemBlock:
    r: float
    lam: float
    gamma_d: float
    gamma_u: float
    delta: float


@dataclass(frozen=True)
class NumericsBlock:
    quad_abs_tol: float = 1e-10
    quad_rel_tol: float = 1e-9
    root_tol: float = 1e-12
    grid_points: int = 512


@dataclass(frozen=True)
class SimBlock:
    x0: float = 1.0
    n_paths: int = 4096
    seed: int = 0
    dt: float = 1e-2
    tail_tol: float = 1e-4
    horizon: float | None = None
    workers: int = 1


@dataclass(frozen=True)
class OutputBlock:
    format: str = "csv"
    path: str | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    problem: ProblemBlock
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def control_problem(self) -> ControlProblem:
        p, n = self.problem, self.numerics
        model = GbmModel(self.model.mu, self.model.sigma)
        spec = ProblemSpec(p.r, p.lam, p.gamma_d, p.gamma_u, PowerSum.monomial(p.delta))
        quad = QuadratureSettings(abs_tol=n.quad_abs_tol, rel_tol=n.quad_rel_tol)
        return ControlProblem(model, spec, Numerics(quad=quad, root_tol=n.root_tol, grid_points=n.grid_points))

    def sim_config(self, **overrides) -> SimConfig:
        return SimConfig(**{**asdict(self.sim), **overrides})

    def with_problem(self, **changes) -> "RunConfig":
        return replace(self, problem=replace(self.problem, **changes))

    def to_dict(self) -> dict[str, Any]:
        p = self.problem
        return {
            "version": SCHEMA_VERSION,
            "model": {"type": self.model.type, "mu": self.model.mu, "sigma": self.model.sigma},
            "problem": {"r": p.r, "lambda": p.lam, "gamma_d": p.gamma_d, "gamma_u": p.gamma_u,
                        "payoff": {"type": "power", "delta": p.delta}},
            "numerics": asdict(self.numerics),
            "sim": asdict(self.sim),
            "output": asdict(self.output),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _block(raw: dict, name: str, required: bool = True) -> dict:
    if name not in raw:
        if required:
            raise ConfigError(f"missing '{name}' block")
        return {}
    block = raw[name]
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be an object")
    return block


def _only(block: dict, allowed: set[str], name: str):
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown field(s) in '{name}': {sorted(extra)}")


def _number(block: dict, key: str, name: str, default=None, positive: bool = False,
            integer: bool = False, nullable: bool = False):
    if key not in block:
        if default is None and not nullable:
            raise ConfigError(f"'{name}.{key}' is required")
        return default
    v = block[key]
    if v is None and nullable:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{name}.{key}' must be a number")
    if integer and not (isinstance(v, int) or float(v).is_integer()):
        raise ConfigError(f"'{name}.{key}' must be an integer")
    v = int(v) if integer else float(v)
    if not math.isfinite(v):
        raise ConfigError(f"'{name}.{key}' must be finite")
    if positive and not v > 0:
        raise ConfigError(f"'{name}.{key}' must be positive")
    return v


def from_dict(raw: Any) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _only(raw, {"version", "model", "problem", "numerics", "sim", "output"}, "config")
    if raw.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {raw.get('version')!r}; expected {SCHEMA_VERSION}")

    m = _block(raw, "model")
    _only(m, {"type", "mu", "sigma"}, "model")
    if m.get("type") != "gbm":
        raise ConfigError(f"unsupported model type {m.get('type')!r}; only 'gbm' is available")
    model = ModelBlock(_number(m, "mu", "model"), _number(m, "sigma", "model", positive=True))

    p = _block(raw, "problem")
    _only(p, {"r", "lambda", "gamma_d", "gamma_u", "payoff"}, "problem")
    pay = _block(p, "payoff")
    _only(pay, {"type", "delta"}, "problem.payoff")
    if pay.get("type") != "power":
        raise ConfigError(f"unsupported payoff type {pay.get('type')!r}; only 'power' is available")
    delta = _number(pay, "delta", "problem.payoff")
    if not 0 < delta < 1:
        raise ConfigError("power payoff needs 0 < delta < 1")
    problem = ProblemBlock(
        r=_number(p, "r", "problem", positive=True),
        lam=_number(p, "lambda", "problem", positive=True),
        gamma_d=_number(p, "gamma_d", "problem"),
        gamma_u=_number(p, "gamma_u", "problem"),
        delta=delta,
    )

    n = _block(raw, "numerics", required=False)
    _only(n, set(NumericsBlock.__dataclass_fields__), "numerics")
    nd = NumericsBlock()
    numerics = NumericsBlock(
        quad_abs_tol=_number(n, "quad_abs_tol", "numerics", nd.quad_abs_tol, positive=True),
        quad_rel_tol=_number(n, "quad_rel_tol", "numerics", nd.quad_rel_tol, positive=True),
        root_tol=_number(n, "root_tol", "numerics", nd.root_tol, positive=True),
        grid_points=_number(n, "grid_points", "numerics", nd.grid_points, positive=True, integer=True),
    )

    s = _block(raw, "sim", required=False)
    _only(s, set(SimBlock.__dataclass_fields__), "sim")
    sd = SimBlock()
    sim = SimBlock(
        x0=_number(s, "x0", "sim", sd.x0, positive=True),
        n_paths=_number(s, "n_paths", "sim", sd.n_paths, positive=True, integer=True),
        seed=_number(s, "seed", "sim", sd.seed, integer=True),
        dt=_number(s, "dt", "sim", sd.dt, positive=True),
        tail_tol=_number(s, "tail_tol", "sim", sd.tail_tol, positive=True),
        horizon=_number(s, "horizon", "sim", None, positive=True, nullable=True),
        workers=_number(s, "workers", "sim", sd.workers, positive=True, integer=True),
    )
    # SimConfig carries the remaining range checks (seed width, tail_tol < 1)
    SimConfig(**asdict(sim))

    o = _block(raw, "output", required=False)
    _only(o, {"format", "path"}, "output")
    fmt = o.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format must be 'csv' or 'json'")
    path = o.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("output.path must be a string or null")
    return RunConfig(model, problem, numerics, sim, OutputBlock(fmt, path))


def loads(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(raw)


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


P0 = RunConfig(ModelBlock(0.05, 0.2), ProblemBlock(r=0.15, lam=2.0, gamma_d=4.0, gamma_u=5.0, delta=0.3))
