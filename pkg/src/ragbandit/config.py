"""Run-configuration documents for the command line (YAML or JSON files)."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .environment import LandscapeModel, RemoteEnvironment, gen_landscape, load_replay
from .estimators import canonical_method
from .exceptions import ConfigError
from .harness import RunConfig, SWEEP_ALIASES, SWEEPABLE
from .hier import UPDATE_SCOPES
from .reward import PROFILES, RewardParams
from .space import HyperParamSpace, default_space


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RewardSection(_Strict):
    w: float = Field(0.5, ge=0, le=1)
    t_max: Optional[int] = Field(None, gt=0)
    penalty_threshold: float = Field(0.0, ge=0, le=1)


class LandscapeSection(_Strict):
    kind: Literal["landscape"] = "landscape"
    regime: Literal["easy", "medium", "hard"] = "easy"
    seed: int = Field(0, ge=0)
    noise_std: float = Field(0.25, ge=0)
    profile: Literal["asqa-like", "nq-like"] = "asqa-like"
    path: Optional[str] = None  # load a saved landscape instead of generating one


class ReplaySection(_Strict):
    kind: Literal["replay"]
    path: str
    manifest: Optional[str] = None


class RemoteSection(_Strict):
    kind: Literal["remote"]
    url: str
    t_max: int = Field(PROFILES["asqa-like"], gt=0)
    timeout: float = Field(30.0, gt=0)
    max_retries: int = Field(2, ge=0)


EnvSection = Union[LandscapeSection, ReplaySection, RemoteSection]


class SwitchSection(_Strict):
    budget: int = Field(6000, gt=0)
    mode: Literal["continue", "reset", "both"] = "both"
    phase2: Optional[EnvSection] = Field(None, discriminator="kind")
    lift: float = 0.05
    jitter: float = Field(0.25, ge=0)


class CliConfig(_Strict):
    method: Union[str, list[str]] = Field("hier-ucb", validate_default=True)
    space: Union[Literal["default-2", "default-3"], dict[str, list[Any]]] = "default-3"
    environment: EnvSection = Field(default_factory=LandscapeSection, discriminator="kind")
    reward: RewardSection = Field(default_factory=RewardSection)
    budget: int = Field(6000, gt=0)
    batch_size: int = Field(4, gt=0)
    alpha: float = Field(1.0, ge=0)
    alpha_high: float = Field(1.0, ge=0)
    alpha_low: float = Field(1.0, ge=0)
    update_scope: str = "all_active"
    obs_variance: float = Field(1.0, gt=0)
    recall_x: int = Field(5, gt=0)
    checkpoint_every: int = Field(25, gt=0)
    seed: int = Field(0, ge=0)
    seeds: int = Field(10, gt=0)
    oracle: str = "auto"
    out: str = "out"
    parallel: Optional[int] = Field(None, gt=0)
    grid: dict[str, list[Any]] = Field(default_factory=dict)
    switch: SwitchSection = Field(default_factory=SwitchSection)

    @model_validator(mode="before")
    @classmethod
    def _default_kinds(cls, doc):
        # environment sections without a kind are generated landscapes
        if isinstance(doc, dict):
            doc = dict(doc)
            if isinstance(doc.get("environment"), dict):
                doc["environment"] = {"kind": "landscape", **doc["environment"]}
            sw = doc.get("switch")
            if isinstance(sw, dict) and isinstance(sw.get("phase2"), dict):
                doc["switch"] = {**sw, "phase2": {"kind": "landscape", **sw["phase2"]}}
        return doc

    @field_validator("method")
    @classmethod
    def _methods(cls, value):
        names = [value] if isinstance(value, str) else list(value)
        if not names:
            raise ValueError("at least one method is required")
        return [canonical_method(n) for n in names]

    @field_validator("update_scope")
    @classmethod
    def _scope(cls, value):
        if value not in UPDATE_SCOPES:
            raise ValueError(f"must be one of {UPDATE_SCOPES}")
        return value

    @field_validator("grid")
    @classmethod
    def _grid(cls, value):
        for key, levels in value.items():
            if SWEEP_ALIASES.get(key, key) not in SWEEPABLE:
                raise ValueError(f"cannot sweep over {key!r}; sweepable fields are {', '.join(SWEEPABLE)}")
            if not isinstance(levels, list) or not levels:
                raise ValueError(f"grid entry {key!r} needs a non-empty list of values")
        return value

    @property
    def methods(self) -> list:
        return list(self.method)


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a mapping at the top level")
    return doc


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def build_config(doc: dict) -> CliConfig:
    try:
        return CliConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_format_errors(exc)}") from None


def resolve_space(cfg: CliConfig) -> HyperParamSpace:
    if isinstance(cfg.space, str):
        return default_space(int(cfg.space[-1]))
    return HyperParamSpace.from_dict(cfg.space)


def reward_params(cfg: CliConfig, t_max) -> RewardParams:
    r = cfg.reward
    return RewardParams(w=r.w, t_max=r.t_max or t_max, penalty_threshold=r.penalty_threshold)


def build_environment(section, space: HyperParamSpace, design_reward=None):
    """Instantiate the environment described by a config section."""
    if isinstance(section, LandscapeSection):
        if section.path:
            try:
                doc = json.loads(Path(section.path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot load landscape {section.path}: {exc}") from None
            return LandscapeModel.from_dict(doc)
        return gen_landscape(section.regime, space, seed=section.seed, reward=design_reward,
                             noise_std=section.noise_std, profile=section.profile)
    if isinstance(section, ReplaySection):
        return load_replay(section.path, section.manifest)
    return RemoteEnvironment(section.url, space, t_max=section.t_max, timeout=section.timeout,
                             max_retries=section.max_retries)


def run_config(cfg: CliConfig, method, reward: RewardParams) -> RunConfig:
    return RunConfig(method=method, budget=cfg.budget, batch_size=cfg.batch_size, reward=reward,
                     alpha=cfg.alpha, alpha_high=cfg.alpha_high, alpha_low=cfg.alpha_low,
                     update_scope=cfg.update_scope, obs_variance=cfg.obs_variance,
                     seed=cfg.seed, recall_x=cfg.recall_x, checkpoint_every=cfg.checkpoint_every)
