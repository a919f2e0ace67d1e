"""Two-level hierarchical UCB.

A high-level bandit picks which dimension to change; that dimension's
low-level bandit picks the new level. Every other dimension keeps the level it
had in the previous trial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bandit import ArmStats, Ranking, _argmax_random_tie, ucb_score
from .exceptions import ConfigError
from .space import Config, HyperParamSpace

ALL_ACTIVE = "all_active"
PULLED_ONLY = "pulled_only"
UPDATE_SCOPES = (ALL_ACTIVE, PULLED_ONLY)


@dataclass
class HierState:
    high_level: list  # ArmStats per dimension
    low_level: list  # per dimension, ArmStats per level
    current_config: Config
    alpha_high: float = 1.0
    alpha_low: float = 1.0
    update_scope: str = ALL_ACTIVE
    config_stats: dict = field(default_factory=dict)
    total_trials: int = 0

    @classmethod
    def fresh(cls, space: HyperParamSpace, initial_config=None, alpha_high=1.0, alpha_low=1.0,
              update_scope=ALL_ACTIVE):
        if update_scope not in UPDATE_SCOPES:
            raise ConfigError(f"update_scope must be one of {UPDATE_SCOPES}, got {update_scope!r}")
        start = space.midpoint() if initial_config is None else space.check_config(initial_config)
        return cls(
            high_level=[ArmStats() for _ in space.dimensions],
            low_level=[[ArmStats() for _ in d.levels] for d in space.dimensions],
            current_config=start,
            alpha_high=float(alpha_high),
            alpha_low=float(alpha_low),
            update_scope=update_scope,
        )


def hier_select(state: HierState, rng):
    """Return ``(dimension, level, proposed_config)`` for the next trial."""
    t = max(state.total_trials, 1)
    dim = _argmax_random_tie([ucb_score(a, t, state.alpha_high) for a in state.high_level], rng)
    level = _argmax_random_tie([ucb_score(a, t, state.alpha_low) for a in state.low_level[dim]], rng)
    proposed = list(state.current_config)
    proposed[dim] = level
    return dim, level, tuple(proposed)


def hier_update(state: HierState, dimension: int, level: int, evaluated: Config, reward: float) -> HierState:
    evaluated = tuple(evaluated)
    if len(evaluated) != len(state.high_level) or evaluated[dimension] != level:
        raise ValueError(f"config {evaluated} does not match selection (dimension={dimension}, level={level})")
    reward = float(reward)
    state.high_level[dimension].update(reward)
    if state.update_scope == ALL_ACTIVE:
        for d, lv in enumerate(evaluated):
            state.low_level[d][lv].update(reward)
    else:
        state.low_level[dimension][level].update(reward)
    state.config_stats.setdefault(evaluated, ArmStats()).update(reward)
    state.current_config = evaluated
    state.total_trials += 1
    return state


def composite_score(state: HierState, config: Config) -> float:
    """Mean of the constituent low-level arm means; an unpulled level scores -inf."""
    total = 0.0
    for d, lv in enumerate(config):
        arm = state.low_level[d][lv]
        if arm.pulls == 0:
            return -math.inf
        total += arm.mean_reward
    return total / len(config)


def hier_rank_configs(state: HierState, x: int, space: HyperParamSpace) -> Ranking:
    """Rank every config: visited ones by empirical mean, the rest by composite score.

    The returned ranking is a full permutation of the space, so it is at least
    ``x`` long.
    """
    if x < 1 or x > space.cardinality:
        raise ConfigError(f"x must lie in [1, {space.cardinality}], got {x}")
    visited = sorted(state.config_stats.items(), key=lambda kv: (-kv[1].mean_reward, kv[0]))
    entries = [(space.index_of(c), s.mean_reward) for c, s in visited]
    seen = set(state.config_stats)
    rest = [(composite_score(state, c), c) for c in space.configs() if c not in seen]
    rest.sort(key=lambda sc: (-sc[0], sc[1]))
    entries.extend((space.index_of(c), s) for s, c in rest)
    return Ranking(entries)
