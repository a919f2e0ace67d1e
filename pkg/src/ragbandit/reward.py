"""Scalar reward trading response accuracy against input-token cost."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from ._validation import check_positive_int, check_unit_interval
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

PENALTY = -1.0

# t_max per dataset profile
PROFILES = {"asqa-like": 1585, "nq-like": 2205}


@dataclass(frozen=True)
class RewardParams:
    w: float = 0.5
    t_max: int = PROFILES["asqa-like"]
    penalty_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "w", check_unit_interval(self.w, "w"))
        object.__setattr__(self, "t_max", check_positive_int(self.t_max, "t_max"))
        object.__setattr__(self, "penalty_threshold",
                           check_unit_interval(self.penalty_threshold, "penalty_threshold"))


@dataclass(frozen=True)
class QueryOutcome:
    accuracy: float
    tokens: int

    def __post_init__(self):
        object.__setattr__(self, "accuracy", check_unit_interval(self.accuracy, "accuracy"))
        if isinstance(self.tokens, bool) or int(self.tokens) != self.tokens or self.tokens < 0:
            raise ConfigError(f"tokens must be a non-negative integer, got {self.tokens!r}")
        object.__setattr__(self, "tokens", int(self.tokens))


def apply_penalty(accuracy: float, params: RewardParams) -> float:
    """Map accuracies at or below the threshold to -1."""
    accuracy = check_unit_interval(accuracy, "accuracy")
    return PENALTY if accuracy <= params.penalty_threshold else accuracy


def compute_reward(outcome: QueryOutcome, params: RewardParams) -> float:
    tokens = outcome.tokens
    if tokens > params.t_max:
        logger.warning("token count %d exceeds t_max=%d, clamping", tokens, params.t_max)
        tokens = params.t_max
    acc = apply_penalty(outcome.accuracy, params)
    return params.w * acc - (1.0 - params.w) * tokens / params.t_max


def batch_reward(outcomes: Sequence[QueryOutcome], params: RewardParams) -> float:
    """Mean reward of one trial's batch of queries."""
    if not outcomes:
        raise ValueError("batch_reward needs at least one outcome")
    return sum(compute_reward(o, params) for o in outcomes) / len(outcomes)
