"""Experiment configuration: JSON <-> dataclasses with path-qualified validation errors."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

WEIGHT_KINDS = ("constant", "power", "random_lognormal", "file", "dual")
SPARSE_KINDS = ("chain", "random", "stopping")
REGIMES = ("auto", "above", "below")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class GridConfig:
    n: int = 1
    L: int = 6


@dataclass
class ExponentConfig:
    p: float = 3.0
    r: float = 2.0
    # "above" asserts p > r, "below" asserts p <= r
    regime: str = "auto"


@dataclass
class WeightSpec:
    kind: str = "random_lognormal"
    params: dict = field(default_factory=dict)


@dataclass
class WeightsConfig:
    w: WeightSpec = field(default_factory=WeightSpec)
    sigma: WeightSpec = field(default_factory=WeightSpec)


@dataclass
class SparseSpec:
    kind: str = "random"
    params: dict = field(default_factory=lambda: {"q": 0.4})
    seed: int | None = None


@dataclass
class BumpConfig:
    beta_eps: float = 3.0
    beta_eta: float = 6.0


@dataclass
class OptimizerConfig:
    restarts: int = 16
    iters: int = 400
    step: float = 0.25
    seed: int = 0


@dataclass
class EnsembleConfig:
    instances: int = 10


@dataclass
class SweepConfig:
    deltas: list = field(default_factory=lambda: [2.0 ** -j for j in range(1, 9)])
    orientations: list = field(default_factory=lambda: ["dual", "inverse"])
    families: list = field(default_factory=lambda: ["chain", "stopping_w", "stopping_sigma"])


@dataclass
class EntropyConfig:
    betas: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 6.0, 8.0])


@dataclass
class OutputConfig:
    path: str | None = None
    format: str = "csv"


@dataclass
class ExperimentConfig:
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    exponents: ExponentConfig = field(default_factory=ExponentConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    sparse: SparseSpec = field(default_factory=SparseSpec)
    bumps: BumpConfig | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = _build(cls, data, "")
        validate(cfg)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"<file>: cannot read config {path}: {exc}") from None
        return cls.from_dict(data)


_NESTED = {
    "grid": GridConfig, "exponents": ExponentConfig, "weights": WeightsConfig, "w": WeightSpec,
    "sigma": WeightSpec, "sparse": SparseSpec, "bumps": BumpConfig, "optimizer": OptimizerConfig,
    "ensemble": EnsembleConfig, "sweep": SweepConfig, "entropy": EntropyConfig, "output": OutputConfig,
}


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{_join(path, unknown[0])}: unknown field")
    kwargs = {}
    for key, value in data.items():
        sub = _join(path, key)
        if key in _NESTED and value is not None:
            kwargs[key] = _build(_NESTED[key], value, sub)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _need(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(cfg: ExperimentConfig) -> None:
    """Structural checks plus the case conditions that do not depend on data."""
    _need(_is_int(cfg.seed) and cfg.seed >= 0, "seed", "must be a nonnegative integer")
    g = cfg.grid
    _need(_is_int(g.n) and g.n >= 1, "grid.n", "must be an integer >= 1")
    _need(_is_int(g.L) and g.L >= 0, "grid.L", "must be an integer >= 0")
    _need(g.n * g.L <= 26, "grid", "n*L must be <= 26")

    e = cfg.exponents
    _need(_is_num(e.p) and e.p > 1, "exponents.p", "must be a number > 1")
    _need(_is_num(e.r) and e.r >= 1, "exponents.r", "must be a number >= 1")
    _need(e.regime in REGIMES, "exponents.regime", f"must be one of {REGIMES}")
    _need(e.regime != "above" or e.p > e.r, "exponents.regime",
          f"the A_p-A_inf bound with the ([w]_A_inf)^(1/r-1/p) term requires p > r (p={e.p}, r={e.r})")
    _need(e.regime != "below" or e.p <= e.r, "exponents.regime",
          f"the A_p-A_inf bound with the single sigma term requires p <= r (p={e.p}, r={e.r})")

    for name in ("w", "sigma"):
        spec = getattr(cfg.weights, name)
        path = f"weights.{name}"
        _need(spec.kind in WEIGHT_KINDS, f"{path}.kind", f"must be one of {WEIGHT_KINDS}")
        _need(isinstance(spec.params, dict), f"{path}.params", "must be an object")
        if spec.kind == "power":
            d = spec.params.get("exponent")
            _need(_is_num(d) and 0 < d <= 1, f"{path}.params.exponent", "power exponent must lie in (0, 1]")
            _need(g.n == 1, f"{path}.kind", "power weights exist only for n = 1")
        if spec.kind == "constant":
            v = spec.params.get("value", 1.0)
            _need(_is_num(v) and v > 0, f"{path}.params.value", "must be > 0")
        if spec.kind == "random_lognormal":
            _need(_is_num(spec.params.get("s", 1.0)) and spec.params.get("s", 1.0) >= 0, f"{path}.params.s",
                  "must be >= 0")
        if spec.kind == "file":
            _need(isinstance(spec.params.get("path"), str), f"{path}.params.path", "must be a string")
    _need(not (cfg.weights.w.kind == "dual" and cfg.weights.sigma.kind == "dual"), "weights",
          "w and sigma cannot both be dual")

    s = cfg.sparse
    _need(s.kind in SPARSE_KINDS, "sparse.kind", f"must be one of {SPARSE_KINDS}")
    if s.kind == "chain":
        d = s.params.get("depth", g.L)
        _need(_is_int(d) and 0 <= d <= g.L, "sparse.params.depth", f"must be an integer in [0, L={g.L}]")
    if s.kind == "random":
        q = s.params.get("q", 0.3)
        _need(_is_num(q) and 0 <= q <= 1, "sparse.params.q", "must lie in [0, 1]")
    if s.kind == "stopping":
        _need(s.params.get("of", "random") in ("random", "w", "sigma"), "sparse.params.of",
              "must be random, w or sigma")
    _need(s.seed is None or _is_int(s.seed), "sparse.seed", "must be an integer or null")

    if cfg.bumps is not None:
        _need(_is_num(cfg.bumps.beta_eps) and cfg.bumps.beta_eps >= 0, "bumps.beta_eps", "must be >= 0")
        _need(_is_num(cfg.bumps.beta_eta) and cfg.bumps.beta_eta >= 0, "bumps.beta_eta", "must be >= 0")

    o = cfg.optimizer
    _need(_is_int(o.restarts) and o.restarts >= 1, "optimizer.restarts", "must be an integer >= 1")
    _need(_is_int(o.iters) and o.iters >= 0, "optimizer.iters", "must be an integer >= 0")
    _need(_is_num(o.step) and 0 < o.step <= 1, "optimizer.step", "must lie in (0, 1]")
    _need(_is_int(o.seed), "optimizer.seed", "must be an integer")
    _need(_is_int(cfg.ensemble.instances) and cfg.ensemble.instances >= 1, "ensemble.instances",
          "must be an integer >= 1")
    _need(isinstance(cfg.sweep.deltas, list) and len(cfg.sweep.deltas) >= 2, "sweep.deltas",
          "needs at least two values")
    for i, d in enumerate(cfg.sweep.deltas):
        _need(_is_num(d) and 0 < d <= 1, f"sweep.deltas[{i}]", "must lie in (0, 1]")
    for i, o_ in enumerate(cfg.sweep.orientations):
        _need(o_ in ("dual", "inverse"), f"sweep.orientations[{i}]", "must be dual or inverse")
    for i, fam in enumerate(cfg.sweep.families):
        _need(fam in ("chain", "stopping_w", "stopping_sigma"), f"sweep.families[{i}]",
              "must be chain, stopping_w or stopping_sigma")
    for i, b in enumerate(cfg.entropy.betas):
        _need(_is_num(b) and b >= 0, f"entropy.betas[{i}]", "must be >= 0")
    _need(cfg.output.format in ("csv", "json"), "output.format", "must be csv or json")
