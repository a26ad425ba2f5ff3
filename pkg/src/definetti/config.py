"""Run configuration: YAML or JSON files with a fixed schema.

Example::

    model:
      sigma: 0.0
      drift: 21.4
      jumps: {lam: 10, density: {family: gamma, k: 2, mu: 1}}
    q: 0.1
    grid: {x_max: 30, n: 8000}
    policy: optimal
    mc: {paths: 100000, seed: 7, x0: [5.0]}

Unknown keys are errors.  :func:`dump` writes a file that loads back to an
equal :class:`RunConfig`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from .dividend import BandPolicy, BarrierPolicy
from .levy import Exponential, GammaShape, LevyModel, Tabulated


class ConfigError(ValueError):
    pass


def _take(d, cls, where):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    names = {f.name for f in fields(cls)}
    extra = sorted(set(d) - names)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")
    return d


def _num(v, where, lo=None, strict=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    if lo is not None and (v <= lo if strict else v < lo):
        raise ConfigError(f"{where}: must be {'>' if strict else '>='} {lo}")
    return v


@dataclass(frozen=True)
class DensitySpec:
    family: str
    mu: Optional[float] = None
    k: Optional[int] = None
    grid: Optional[tuple] = None
    values: Optional[tuple] = None

    @classmethod
    def parse(cls, d, where="model.jumps.density"):
        d = _take(d, cls, where)
        fam = d.get("family")
        if fam not in ("exponential", "gamma", "tabulated"):
            raise ConfigError(f"{where}.family: one of exponential, gamma, tabulated")
        if fam == "tabulated":
            if "grid" not in d or "values" not in d:
                raise ConfigError(f"{where}: tabulated density needs grid and values")
            return cls(fam, grid=tuple(float(v) for v in d["grid"]),
                       values=tuple(float(v) for v in d["values"]))
        mu = _num(d.get("mu"), f"{where}.mu", 0, strict=True)
        k = 1
        if fam == "gamma":
            k = d.get("k")
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                raise ConfigError(f"{where}.k: positive integer required")
        elif "k" in d and d["k"] not in (None, 1):
            raise ConfigError(f"{where}.k: exponential density has k = 1")
        return cls(fam, mu=mu, k=k if fam == "gamma" else None)

    def build(self):
        if self.family == "exponential":
            return Exponential(self.mu)
        if self.family == "gamma":
            return GammaShape(self.k, self.mu)
        return Tabulated(np.array(self.grid), np.array(self.values))


@dataclass(frozen=True)
class JumpSpec:
    lam: float
    density: DensitySpec

    @classmethod
    def parse(cls, d, where="model.jumps"):
        d = _take(d, cls, where)
        return cls(_num(d.get("lam"), f"{where}.lam", 0, strict=True),
                   DensitySpec.parse(d.get("density")))


@dataclass(frozen=True)
class ModelSpec:
    drift: float
    sigma: float = 0.0
    jumps: Optional[JumpSpec] = None

    @classmethod
    def parse(cls, d, where="model"):
        d = _take(d, cls, where)
        if "drift" not in d:
            raise ConfigError(f"{where}.drift is required")
        jumps = JumpSpec.parse(d["jumps"]) if d.get("jumps") is not None else None
        return cls(_num(d["drift"], f"{where}.drift"), _num(d.get("sigma", 0.0), f"{where}.sigma", 0),
                   jumps)

    def build(self) -> LevyModel:
        try:
            if self.jumps is None:
                return LevyModel(self.sigma, self.drift, None)
            return LevyModel.cramer_lundberg(self.drift, self.jumps.lam,
                                             self.jumps.density.build(), sigma=self.sigma)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None


@dataclass(frozen=True)
class GridSpec:
    x_max: float = 20.0
    n: int = 4000

    @classmethod
    def parse(cls, d, where="grid"):
        d = _take(d, cls, where)
        n = d.get("n", cls.n)
        if not isinstance(n, int) or isinstance(n, bool) or n < 8:
            raise ConfigError(f"{where}.n: integer >= 8 required")
        return cls(_num(d.get("x_max", cls.x_max), f"{where}.x_max", 0, strict=True), n)

    @property
    def points(self):
        return np.linspace(0.0, self.x_max, self.n + 1)


@dataclass(frozen=True)
class ExitSpec:
    a: float
    one_sided: bool = False

    @classmethod
    def parse(cls, d, where="mc.exit"):
        d = _take(d, cls, where)
        one = d.get("one_sided", False)
        if not isinstance(one, bool):
            raise ConfigError(f"{where}.one_sided: boolean required")
        return cls(_num(d.get("a"), f"{where}.a", 0, strict=True), one)


@dataclass(frozen=True)
class MCSpec:
    paths: int = 100_000
    seed: int = 0
    x0: tuple = (1.0,)
    dt: Optional[float] = None
    T: Optional[float] = None
    target_se: float = 0.01
    exit: Optional[ExitSpec] = None

    @classmethod
    def parse(cls, d, where="mc"):
        d = _take(d, cls, where)
        paths, seed = d.get("paths", cls.paths), d.get("seed", cls.seed)
        for name, v in (("paths", paths), ("seed", seed)):
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{where}.{name}: nonnegative integer required")
        if paths < 1:
            raise ConfigError(f"{where}.paths: must be positive")
        x0 = d.get("x0", list(cls.x0))
        x0 = x0 if isinstance(x0, (list, tuple)) else [x0]
        return cls(paths, seed, tuple(_num(v, f"{where}.x0", 0) for v in x0),
                   _num(d.get("dt"), f"{where}.dt", 0, strict=True, allow_none=True),
                   _num(d.get("T"), f"{where}.T", 0, strict=True, allow_none=True),
                   _num(d.get("target_se", cls.target_se), f"{where}.target_se", 0, strict=True),
                   ExitSpec.parse(d["exit"]) if d.get("exit") is not None else None)


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    q: float = 0.1
    grid: GridSpec = field(default_factory=GridSpec)
    policy: Union[str, float, tuple, None] = "optimal"
    mc: MCSpec = field(default_factory=MCSpec)
    representation: str = "auto"
    allow_zero_q: bool = False
    output: Optional[str] = None

    @classmethod
    def parse(cls, d) -> "RunConfig":
        d = _take(d, cls, "config")
        if "model" not in d:
            raise ConfigError("config: model is required")
        rep = d.get("representation", "auto")
        if rep not in ("auto", "closed", "numeric"):
            raise ConfigError("representation: one of auto, closed, numeric")
        azq = d.get("allow_zero_q", False)
        if not isinstance(azq, bool):
            raise ConfigError("allow_zero_q: boolean required")
        out = d.get("output")
        if out is not None and not isinstance(out, str):
            raise ConfigError("output: path string required")
        return cls(ModelSpec.parse(d["model"]), _num(d.get("q", 0.1), "q", 0),
                   GridSpec.parse(d.get("grid")), _policy(d.get("policy", "optimal")),
                   MCSpec.parse(d.get("mc")), rep, azq, out)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def policy_object(self, a_star: Optional[float] = None):
        p = self.policy
        if p is None:
            return None
        if p == "optimal":
            if a_star is None:
                raise ValueError("optimal policy needs a*")
            return BarrierPolicy(a_star)
        if isinstance(p, float):
            return BarrierPolicy(p)
        return BandPolicy(p)


def _policy(p):
    if p is None or p == "optimal":
        return p
    if isinstance(p, dict):
        extra = sorted(set(p) - {"barrier", "bands"})
        if extra:
            raise ConfigError(f"policy: unknown key(s) {', '.join(extra)}")
        if len(p) != 1:
            raise ConfigError("policy: give exactly one of barrier, bands")
        if "barrier" in p:
            return _num(p["barrier"], "policy.barrier", 0)
        try:
            bands = tuple((float(b), float(a)) for b, a in p["bands"])
            BandPolicy(bands)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"policy.bands: {exc}") from None
        return bands
    raise ConfigError("policy: 'optimal', null, {barrier: a} or {bands: [[b, a], ...]}")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _policy_out(p):
    if p is None or p == "optimal":
        return p
    if isinstance(p, float):
        return {"barrier": p}
    return {"bands": [list(x) for x in p]}


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig.parse(data)


def to_mapping(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d["policy"] = _policy_out(cfg.policy)
    d["model"] = _drop_none(d["model"])
    d["mc"] = _drop_none(d["mc"])
    return _drop_none(d)


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def dump(cfg: RunConfig, path) -> None:
    """Echo ``cfg`` as YAML (or JSON for a ``.json`` path)."""
    data = to_mapping(cfg)
    path = Path(path)
    with open(path, "w") as fh:
        if path.suffix == ".json":
            json.dump(data, fh, indent=2)
        else:
            yaml.safe_dump(data, fh, sort_keys=False)
