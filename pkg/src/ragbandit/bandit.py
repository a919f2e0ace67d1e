"""Flat bandit policies (UCB, Thompson sampling, random) over a discrete arm set."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError

UCB = "ucb"
THOMPSON = "thompson"
RANDOM = "random"


@dataclass
class ArmStats:
    pulls: int = 0
    mean_reward: float = 0.0
    sum_sq_dev: float = 0.0

    def update(self, reward: float) -> None:
        # Welford running mean / squared deviations
        self.pulls += 1
        delta = reward - self.mean_reward
        self.mean_reward += delta / self.pulls
        self.sum_sq_dev += delta * (reward - self.mean_reward)

    @property
    def variance(self) -> float:
        return self.sum_sq_dev / (self.pulls - 1) if self.pulls > 1 else 0.0

    def to_list(self):
        return [self.pulls, self.mean_reward, self.sum_sq_dev]

    @classmethod
    def from_list(cls, values):
        pulls, mean, ssd = values
        return cls(int(pulls), float(mean), float(ssd))


@dataclass
class FlatBanditState:
    arms: list
    policy: str = UCB
    alpha: float = 1.0
    obs_variance: float = 1.0
    total_trials: int = 0

    @classmethod
    def fresh(cls, n_arms, policy=UCB, alpha=1.0, obs_variance=1.0):
        if n_arms < 1:
            raise ConfigError("a bandit needs at least one arm")
        if policy not in (UCB, THOMPSON, RANDOM):
            raise ConfigError(f"unknown policy {policy!r}")
        if obs_variance <= 0:
            raise ConfigError("obs_variance must be positive")
        return cls([ArmStats() for _ in range(n_arms)], policy, float(alpha), float(obs_variance))

    def __len__(self):
        return len(self.arms)


class Ranking(NamedTuple):
    """Configs in rank order with the key each was ranked by."""

    entries: list  # list of (config_index, score)

    @property
    def order(self):
        return [i for i, _ in self.entries]

    def top(self, x):
        return self.order[:x]


def ucb_score(stats: ArmStats, t: int, alpha: float) -> float:
    if t < 1:
        raise ValueError(f"UCB timestep must be >= 1, got {t}")
    if stats.pulls == 0:
        return math.inf
    return stats.mean_reward + alpha * math.sqrt(math.log(t) / stats.pulls)


def _argmax_random_tie(scores, rng) -> int:
    best = max(scores)
    ties = [i for i, s in enumerate(scores) if s == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def _check_nonempty(state):
    if not state.arms:
        raise ValueError("cannot select from an empty arm set")


def select_ucb(state: FlatBanditState, rng, alpha=None) -> int:
    _check_nonempty(state)
    alpha = state.alpha if alpha is None else alpha
    t = max(state.total_trials, 1)
    return _argmax_random_tie([ucb_score(a, t, alpha) for a in state.arms], rng)


def thompson_posterior(stats: ArmStats, obs_variance: float):
    """Posterior (mean, variance) of an arm's mean under a N(0, 1) prior."""
    denom = stats.pulls + obs_variance
    return stats.pulls * stats.mean_reward / denom, obs_variance / denom


def select_thompson(state: FlatBanditState, rng) -> int:
    _check_nonempty(state)
    pulls = np.array([a.pulls for a in state.arms], dtype=float)
    means = np.array([a.mean_reward for a in state.arms])
    denom = pulls + state.obs_variance
    samples = rng.normal(pulls * means / denom, np.sqrt(state.obs_variance / denom))
    return int(np.argmax(samples))


def select_random(state: FlatBanditState, rng) -> int:
    _check_nonempty(state)
    return int(rng.integers(len(state.arms)))


SELECTORS = {UCB: select_ucb, THOMPSON: select_thompson, RANDOM: select_random}


def select_arm(state: FlatBanditState, rng) -> int:
    return SELECTORS[state.policy](state, rng)


def update_arm(state: FlatBanditState, config_index: int, reward: float) -> FlatBanditState:
    if isinstance(config_index, bool) or not 0 <= config_index < len(state.arms):
        raise IndexError(f"arm index {config_index!r} out of range")
    state.arms[config_index].update(float(reward))
    state.total_trials += 1
    return state


def rank_arms(state: FlatBanditState) -> Ranking:
    """Pulled arms by mean descending, then unpulled arms; ties by index."""
    order = sorted(range(len(state.arms)),
                   key=lambda i: (state.arms[i].pulls == 0, -state.arms[i].mean_reward, i))
    return Ranking([(i, state.arms[i].mean_reward if state.arms[i].pulls else -math.inf)
                    for i in order])
