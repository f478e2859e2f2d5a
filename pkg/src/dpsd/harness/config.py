"""Experiment configuration.

A configuration is a flat JSON object. Keys left out take the values in
:data:`DEFAULTS`; a ``variant`` names a preset from :data:`PRESETS` whose values sit
between the defaults and the explicit keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..budget import COUNT_STRATEGIES, BudgetPlan, make_plan
from ..geometry import Rect
from ..median import MECHANISMS, MedianMechanism
from ..tree import TREE_KINDS

# a box around the contiguous western United States, in degrees
DEFAULT_DOMAIN = (-124.82, -103.0, 31.33, 49.0)
DEFAULT_SHAPES = ((1.0, 1.0), (10.0, 10.0), (15.0, 0.2))

DEFAULTS: dict = {
    "variant": None,
    "dataset": None,
    "synthetic": "skewed-corner",
    "n": 100_000,
    "data_seed": 0,
    "domain": list(DEFAULT_DOMAIN),
    "kind": "hybrid",
    "height": 8,
    "epsilon": 0.5,
    "count_strategy": "geometric",
    "count_share": 0.7,
    "skip_levels": [],
    "mechanism": "em",
    "delta": 1e-4,
    "cell_length": 0.01,
    "sample_rate": 1.0,
    "switch_level": None,
    "hilbert_order": 18,
    "counts": "ols",
    "prune": 32,
    "shapes": [list(s) for s in DEFAULT_SHAPES],
    "queries_per_shape": 600,
    "workload_seed": 0,
    "seed": 0,
    "trials": 1,
    "noiseless": False,
}

_QUAD = {"kind": "quadtree", "prune": None}
PRESETS: dict[str, dict] = {
    "quad-baseline": {**_QUAD, "count_strategy": "uniform", "counts": "raw"},
    "quad-geo": {**_QUAD, "count_strategy": "geometric", "counts": "raw"},
    "quad-post": {**_QUAD, "count_strategy": "uniform", "counts": "ols"},
    "quad-opt": {**_QUAD, "count_strategy": "geometric", "counts": "ols"},
    "kd-standard": {"kind": "kd", "mechanism": "em"},
    "kd-hybrid": {"kind": "hybrid", "mechanism": "em"},
    "kd-cell": {"kind": "kd", "mechanism": "cell"},
    "kd-noisymean": {"kind": "kd", "mechanism": "nm"},
    "hilbert-r": {"kind": "hilbert", "mechanism": "em"},
}


class ConfigError(ValueError):
    pass


def load_config_file(path) -> dict:
    with open(Path(path), encoding="utf-8") as fp:
        data = json.load(fp)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    return data


def resolve(explicit: dict) -> dict:
    """Merge defaults, the named preset and explicit keys (later wins)."""
    unknown = set(explicit) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    variant = explicit.get("variant")
    cfg = dict(DEFAULTS)
    if variant is not None:
        if variant not in PRESETS:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(PRESETS)}")
        cfg.update(PRESETS[variant])
    cfg.update(explicit)
    return cfg


@dataclass(frozen=True)
class ExperimentSpec:
    domain: Rect
    kind: str = "hybrid"
    height: int = 8
    epsilon: float = 0.5
    count_strategy: str = "geometric"
    count_share: float = 0.7
    skip_levels: tuple = ()
    mechanism: MedianMechanism = field(default_factory=MedianMechanism)
    switch_level: int | None = None
    hilbert_order: int = 18
    counts: str = "ols"
    prune: float | None = 32
    shapes: tuple = DEFAULT_SHAPES
    queries_per_shape: int = 600
    workload_seed: int = 0
    seed: int = 0
    trials: int = 1
    dataset: str | None = None
    synthetic: str = "skewed-corner"
    n: int = 100_000
    data_seed: int = 0
    variant: str | None = None
    noiseless: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.height < 0:
            raise ConfigError(f"height must be >= 0, got {self.height}")
        if self.kind not in TREE_KINDS:
            raise ConfigError(f"unknown tree kind {self.kind!r}; expected one of {TREE_KINDS}")
        if self.count_strategy not in COUNT_STRATEGIES or self.count_strategy == "custom":
            raise ConfigError(f"unsupported count strategy {self.count_strategy!r}")
        if self.counts not in ("raw", "ols"):
            raise ConfigError(f"counts must be 'raw' or 'ols', got {self.counts!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @property
    def ell(self) -> int:
        """Number of levels with private median splits."""
        if self.kind == "quadtree":
            return 0
        if self.kind == "hybrid":
            return self.height // 2 if self.switch_level is None else int(self.switch_level)
        return self.height

    def plan(self) -> BudgetPlan:
        ell = self.ell
        if ell == 0:
            return make_plan(self.epsilon, self.height, self.count_strategy, 1.0, "none",
                             skip_levels=self.skip_levels)
        strategy = "hybrid-top-levels" if self.kind == "hybrid" else "uniform-internal"
        return make_plan(self.epsilon, self.height, self.count_strategy, self.count_share, strategy,
                         switch_level=ell if self.kind == "hybrid" else None, skip_levels=self.skip_levels)

    @classmethod
    def from_config(cls, cfg: dict) -> ExperimentSpec:
        cfg = resolve(cfg)
        if cfg["mechanism"] not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {cfg['mechanism']!r}; expected one of {MECHANISMS}")
        try:
            domain = Rect(*map(float, cfg["domain"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad domain {cfg['domain']!r}: {exc}") from None
        mech = MedianMechanism(cfg["mechanism"], float(cfg["delta"]), float(cfg["cell_length"]),
                               float(cfg["sample_rate"]))
        prune = cfg["prune"]
        return cls(
            domain=domain,
            kind=cfg["kind"],
            height=int(cfg["height"]),
            epsilon=float(cfg["epsilon"]),
            count_strategy=cfg["count_strategy"],
            count_share=float(cfg["count_share"]),
            skip_levels=tuple(int(s) for s in cfg["skip_levels"]),
            mechanism=mech,
            switch_level=None if cfg["switch_level"] is None else int(cfg["switch_level"]),
            hilbert_order=int(cfg["hilbert_order"]),
            counts=cfg["counts"],
            prune=None if prune is None else float(prune),
            shapes=tuple((float(w), float(h)) for w, h in cfg["shapes"]),
            queries_per_shape=int(cfg["queries_per_shape"]),
            workload_seed=int(cfg["workload_seed"]),
            seed=int(cfg["seed"]),
            trials=int(cfg["trials"]),
            dataset=cfg["dataset"],
            synthetic=cfg["synthetic"],
            n=int(cfg["n"]),
            data_seed=int(cfg["data_seed"]),
            variant=cfg["variant"],
            noiseless=bool(cfg["noiseless"]),
        )

    def to_config(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "domain":
                v = list(v.as_tuple())
            elif f.name == "mechanism":
                out.update({"mechanism": v.kind, "delta": v.delta, "cell_length": v.cell_length,
                            "sample_rate": v.sample_rate})
                continue
            elif f.name in ("shapes",):
                v = [list(s) for s in v]
            elif f.name == "skip_levels":
                v = list(v)
            out[f.name] = v
        return out
