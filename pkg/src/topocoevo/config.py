"""Run configuration: a versioned JSON document with fail-closed parsing."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .control import ControlParams
from .evaluation import SyntheticLandscape
from .exceptions import ConfigError
from .genome import DomainTag
from .indicators import ObjectiveBounds
from .initialization import CrossoverBias
from .selection import SelectionConfig
from .variation import MutationWeights

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PreferenceConfig:
    k: float = 2.0
    gamma: float = 1.0
    beta_pref: float = 1.0
    K0: float = 10.0
    T0: float | None = None  # None: median cost of the initial population


@dataclass(frozen=True)
class EvaluatorConfig:
    kind: str = "synthetic"
    endpoint: str | None = None
    task_batch_id: str = "dev"
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5
    fallback_synthetic: bool = False


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    run_id: str | None = None
    seed: int = 0
    population_size: int = 16
    elite_size: int = 8
    generations: int = 21
    domain: str = DomainTag.SYNTHETIC.value
    min_agents: int = 2
    max_agents: int = 8
    max_free_nodes: int = 10
    delta: float = 0.05
    eps_acc: float = 0.015
    cost_factor: float = 0.8
    tail_percentile: float = 80.0
    cost_budget: float = 5000.0
    k_max: int = 64
    crossover_radius: int = 1
    mutation_retries: int = 5
    archive_capacity: int = 32
    archive_every: int = 3
    dev_set_size: int = 500
    n_jobs: int = 1
    checkpoint_dir: str = "runs"
    preference: PreferenceConfig = field(default_factory=PreferenceConfig)
    mutation: MutationWeights = field(default_factory=MutationWeights)
    crossover_bias: CrossoverBias = field(default_factory=CrossoverBias)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    control: ControlParams = field(default_factory=ControlParams)
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    landscape: SyntheticLandscape = field(default_factory=SyntheticLandscape)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if not self.population_size >= self.elite_size >= 1:
            raise ConfigError("need population_size >= elite_size >= 1")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if self.min_agents < 1 or self.max_agents < self.min_agents:
            raise ConfigError("need 1 <= min_agents <= max_agents")
        if self.delta < 0 or self.eps_acc < 0:
            raise ConfigError("delta and eps_acc must be non-negative")
        if not 0 < self.cost_factor <= 1:
            raise ConfigError("cost_factor must lie in (0, 1]")
        if not 0 <= self.tail_percentile <= 100:
            raise ConfigError("tail_percentile must lie in [0, 100]")
        if self.cost_budget <= 0 or self.k_max < 1:
            raise ConfigError("cost_budget and k_max must be positive")
        if self.archive_every < 1 or self.dev_set_size < 1 or self.n_jobs < 1:
            raise ConfigError("archive_every, dev_set_size and n_jobs must be >= 1")
        if self.evaluator.kind not in ("synthetic", "external"):
            raise ConfigError(f"unknown evaluator kind {self.evaluator.kind!r}")
        try:
            DomainTag(self.domain)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def bounds(self) -> ObjectiveBounds:
        return ObjectiveBounds.from_budget(self.cost_budget, self.k_max)

    @property
    def effective_run_id(self) -> str:
        return self.run_id or f"seed{self.seed}"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "landscape":
                out[f.name] = value.to_dict()
            elif f.name == "mutation":
                out[f.name] = value.to_dict()
            elif f.name == "control":
                out[f.name] = value.to_dict()
            elif dataclasses.is_dataclass(value):
                out[f.name] = dataclasses.asdict(value)
            else:
                out[f.name] = value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        if "schema_version" not in data:
            raise ConfigError("config is missing schema_version")
        kw = _strict_kwargs(cls, data, "config")
        nested = {
            "preference": PreferenceConfig,
            "crossover_bias": CrossoverBias,
            "selection": SelectionConfig,
            "evaluator": EvaluatorConfig,
            "mutation": MutationWeights,
        }
        try:
            for name, typ in nested.items():
                if name in kw:
                    kw[name] = typ(**_strict_kwargs(typ, kw[name], name))
            if "control" in kw:
                kw["control"] = ControlParams.from_dict(_strict_kwargs(ControlParams, kw["control"], "control"))
            if "landscape" in kw:
                kw["landscape"] = SyntheticLandscape.from_dict(
                    _strict_kwargs(SyntheticLandscape, kw["landscape"], "landscape"))
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from None
        return cls.from_dict(data)


def _strict_kwargs(cls, data: Any, where: str) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return dict(data)
