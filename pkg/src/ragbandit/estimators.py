"""Scikit-learn style tuners.

Each tuner follows the estimator conventions: constructor arguments are plain
hyper-parameters (so ``get_params``/``set_params``/``clone`` work), learned
state lives in trailing-underscore attributes, and ``fit`` returns ``self``.

``fit(env, n_trials)`` runs the online loop from a cold start;
``partial_fit(env, n_trials)`` keeps going from the current state (a warm
start). ``suggest``/``update`` expose a single step for callers that evaluate
configurations themselves.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_nonnegative_real, check_positive_int, check_seed_sequence
from .bandit import (RANDOM, THOMPSON, UCB, ArmStats, FlatBanditState, rank_arms, select_arm,
                     update_arm)
from .exceptions import ConfigError, EnvironmentFailure
from .hier import (ALL_ACTIVE, UPDATE_SCOPES, HierState, composite_score, hier_rank_configs,
                   hier_select, hier_update)
from .reward import RewardParams, batch_reward
from .space import HyperParamSpace


class Suggestion(NamedTuple):
    config_index: int
    config: tuple
    dimension: int | None = None
    level: int | None = None


class TrialRecord(NamedTuple):
    trial: int
    config_index: int
    pulled_dimension: int | None
    outcomes: list
    reward: float


class BaseTuner(BaseEstimator):
    method = None

    def _make_state(self):
        raise NotImplementedError

    def _check_space(self):
        if not isinstance(self.space, HyperParamSpace):
            raise ConfigError(f"space must be a HyperParamSpace, got {type(self.space).__name__}")
        return self.space

    def initialize(self):
        """Fresh learner state and random streams derived from ``random_state``."""
        self._check_space()
        select_seq, env_seq = check_seed_sequence(self.random_state).spawn(2)
        self.rng_ = np.random.default_rng(select_seq)
        self.env_rng_ = np.random.default_rng(env_seq)
        self.state_ = self._make_state()
        self.trials_ = []
        return self

    def _ensure_initialized(self):
        if not hasattr(self, "state_"):
            self.initialize()

    def reset(self):
        """Zero every statistic; random streams continue where they were."""
        self._ensure_initialized()
        self.state_ = self._make_state()
        return self

    @property
    def n_trials_(self):
        self._ensure_initialized()
        return self.state_.total_trials

    def fit(self, env, n_trials, batch_size=4, reward=None, callback=None):
        self.initialize()
        return self.partial_fit(env, n_trials, batch_size=batch_size, reward=reward, callback=callback)

    def partial_fit(self, env, n_trials, batch_size=4, reward=None, callback=None):
        """Run ``n_trials`` select/evaluate/update steps against ``env``."""
        self._ensure_initialized()
        n_trials = check_positive_int(n_trials, "n_trials")
        batch_size = check_positive_int(batch_size, "batch_size")
        if env.space != self.space:
            raise ConfigError("environment and tuner use different search spaces")
        reward = reward or RewardParams(t_max=env.t_max)
        for _ in range(n_trials):
            trial = self.state_.total_trials
            suggestion = self.suggest()
            try:
                outcomes = env.evaluate(suggestion.config, batch_size, self.env_rng_)
            except EnvironmentFailure as exc:
                exc.trial = trial
                raise
            except Exception as exc:
                raise EnvironmentFailure(f"trial {trial}: {exc}", trial=trial) from exc
            value = batch_reward(outcomes, reward)
            self.update(suggestion, value)
            record = TrialRecord(trial, suggestion.config_index, suggestion.dimension, outcomes, value)
            self.trials_.append(record)
            if callback is not None:
                callback(self, record)
        return self

    def suggest(self) -> Suggestion:
        raise NotImplementedError

    def update(self, suggestion: Suggestion, reward: float):
        raise NotImplementedError

    def rank(self, x=1):
        raise NotImplementedError

    def top_configs(self, x):
        """The ``x`` best configurations as named levels."""
        space = self._check_space()
        return [space.named(space.config_at(i)) for i in self.rank(x).top(x)]

    def score(self, oracle, x=5):
        """Recall@x of this tuner's ranking against an oracle ranking."""
        from .harness import recall_at_x
        return recall_at_x(self.rank(x), oracle, x)

    def get_state(self) -> dict:
        self._ensure_initialized()
        return {
            "method": self.method,
            "learner": self._dump_state(),
            "rng": self.rng_.bit_generator.state,
            "env_rng": self.env_rng_.bit_generator.state,
        }

    def set_state(self, doc: dict):
        if doc.get("method") != self.method:
            raise ConfigError(f"state was saved by {doc.get('method')!r}, not {self.method!r}")
        self._check_space()
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng"]
        env_rng = np.random.default_rng()
        env_rng.bit_generator.state = doc["env_rng"]
        self.state_ = self._load_state(doc["learner"])
        self.rng_, self.env_rng_ = rng, env_rng
        self.trials_ = []
        return self


class _FlatTuner(BaseTuner):
    policy = None

    def _make_state(self):
        return FlatBanditState.fresh(self._check_space().cardinality, self.policy,
                                     alpha=self._alpha(), obs_variance=self._obs_variance())

    def _alpha(self):
        return 1.0

    def _obs_variance(self):
        return 1.0

    def suggest(self):
        self._ensure_initialized()
        index = select_arm(self.state_, self.rng_)
        return Suggestion(index, self.space.config_at(index))

    def update(self, suggestion, reward):
        self._ensure_initialized()
        update_arm(self.state_, suggestion.config_index, reward)
        return self

    def rank(self, x=1):
        self._ensure_initialized()
        if not 1 <= x <= self.space.cardinality:
            raise ConfigError(f"x must lie in [1, {self.space.cardinality}], got {x}")
        return rank_arms(self.state_)

    def predict(self, configs):
        """Empirical mean reward per config (NaN where never evaluated)."""
        self._ensure_initialized()
        out = []
        for c in configs:
            arm = self.state_.arms[self.space.index_of(c)]
            out.append(arm.mean_reward if arm.pulls else np.nan)
        return np.array(out)

    def _dump_state(self):
        s = self.state_
        return {"total_trials": s.total_trials, "arms": [a.to_list() for a in s.arms]}

    def _load_state(self, doc):
        state = self._make_state()
        arms = [ArmStats.from_list(a) for a in doc["arms"]]
        if len(arms) != len(state.arms):
            raise ConfigError("saved state has the wrong number of arms")
        state.arms = arms
        state.total_trials = int(doc["total_trials"])
        if state.total_trials != sum(a.pulls for a in arms):
            raise ConfigError("saved state violates pull conservation")
        return state


class UCBTuner(_FlatTuner):
    """UCB over the flattened space."""

    method = "ucb"
    policy = UCB

    def __init__(self, space=None, alpha=1.0, random_state=None):
        self.space = space
        self.alpha = alpha
        self.random_state = random_state

    def _alpha(self):
        return check_nonnegative_real(self.alpha, "alpha")


class ThompsonTuner(_FlatTuner):
    """Gaussian Thompson sampling (prior N(0, 1), known observation variance)."""

    method = "thompson"
    policy = THOMPSON

    def __init__(self, space=None, obs_variance=1.0, random_state=None):
        self.space = space
        self.obs_variance = obs_variance
        self.random_state = random_state

    def _obs_variance(self):
        value = check_nonnegative_real(self.obs_variance, "obs_variance")
        if value == 0:
            raise ConfigError("obs_variance must be positive")
        return value


class RandomTuner(_FlatTuner):
    method = "random"
    policy = RANDOM

    def __init__(self, space=None, random_state=None):
        self.space = space
        self.random_state = random_state


class HierUCBTuner(BaseTuner):
    """Two-level UCB: pick a dimension to change, then its new level."""

    method = "hier-ucb"

    def __init__(self, space=None, alpha_high=1.0, alpha_low=1.0, update_scope=ALL_ACTIVE,
                 initial_config=None, random_state=None):
        self.space = space
        self.alpha_high = alpha_high
        self.alpha_low = alpha_low
        self.update_scope = update_scope
        self.initial_config = initial_config
        self.random_state = random_state

    def _make_state(self):
        space = self._check_space()
        if self.update_scope not in UPDATE_SCOPES:
            raise ConfigError(f"update_scope must be one of {UPDATE_SCOPES}, got {self.update_scope!r}")
        start = self.initial_config
        if isinstance(start, dict):
            start = space.from_named(start)
        return HierState.fresh(space, start,
                               alpha_high=check_nonnegative_real(self.alpha_high, "alpha_high"),
                               alpha_low=check_nonnegative_real(self.alpha_low, "alpha_low"),
                               update_scope=self.update_scope)

    def suggest(self):
        self._ensure_initialized()
        dim, level, config = hier_select(self.state_, self.rng_)
        return Suggestion(self.space.index_of(config), config, dim, level)

    def update(self, suggestion, reward):
        self._ensure_initialized()
        hier_update(self.state_, suggestion.dimension, suggestion.level, suggestion.config, reward)
        return self

    def rank(self, x=1):
        self._ensure_initialized()
        return hier_rank_configs(self.state_, x, self.space)

    def predict(self, configs):
        """Visited configs: empirical mean; others: composite low-level score."""
        self._ensure_initialized()
        out = []
        for c in configs:
            c = self.space.check_config(c)
            stats = self.state_.config_stats.get(c)
            out.append(stats.mean_reward if stats else composite_score(self.state_, c))
        return np.array(out)

    def _dump_state(self):
        s = self.state_
        return {
            "total_trials": s.total_trials,
            "current_config": list(s.current_config),
            "high_level": [a.to_list() for a in s.high_level],
            "low_level": [[a.to_list() for a in arms] for arms in s.low_level],
            "config_stats": [[list(c), st.to_list()] for c, st in sorted(s.config_stats.items())],
        }

    def _load_state(self, doc):
        state = self._make_state()
        state.total_trials = int(doc["total_trials"])
        state.current_config = self.space.check_config(doc["current_config"])
        high = [ArmStats.from_list(a) for a in doc["high_level"]]
        low = [[ArmStats.from_list(a) for a in arms] for arms in doc["low_level"]]
        if len(high) != self.space.n_dims or [len(a) for a in low] != list(self.space.shape):
            raise ConfigError("saved state does not match the search space")
        state.high_level, state.low_level = high, low
        state.config_stats = {self.space.check_config(c): ArmStats.from_list(st)
                              for c, st in doc["config_stats"]}
        if state.total_trials != sum(a.pulls for a in high):
            raise ConfigError("saved state violates pull conservation")
        return state


TUNERS = {
    "hier-ucb": HierUCBTuner,
    "ucb": UCBTuner,
    "thompson": ThompsonTuner,
    "random": RandomTuner,
}

_ALIASES = {"hierucb": "hier-ucb", "hier_ucb": "hier-ucb", "ts": "thompson"}


def canonical_method(name) -> str:
    key = str(name).lower()
    key = _ALIASES.get(key, key)
    if key not in TUNERS:
        raise ConfigError(f"unknown method {name!r}; expected one of {sorted(TUNERS)}")
    return key


def make_tuner(method, space, alpha=1.0, alpha_high=1.0, alpha_low=1.0, update_scope=ALL_ACTIVE,
               obs_variance=1.0, initial_config=None, random_state=None) -> BaseTuner:
    method = canonical_method(method)
    if method == "hier-ucb":
        return HierUCBTuner(space, alpha_high, alpha_low, update_scope, initial_config, random_state)
    if method == "ucb":
        return UCBTuner(space, alpha, random_state)
    if method == "thompson":
        return ThompsonTuner(space, obs_variance, random_state)
    return RandomTuner(space, random_state)
