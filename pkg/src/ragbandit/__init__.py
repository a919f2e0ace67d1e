"""Online hyper-parameter tuning for RAG pipelines framed as multi-armed bandits."""
from .bandit import ArmStats, FlatBanditState, Ranking, rank_arms, ucb_score, update_arm
from .estimators import HierUCBTuner, RandomTuner, ThompsonTuner, UCBTuner, make_tuner
from .harness import (OracleTable, RunConfig, Trajectory, aggregate_seeds, grid_search,
                      model_switch_run, recall_at_x, run_experiment, sweep)
from .hier import HierState
from .reward import QueryOutcome, RewardParams, batch_reward, compute_reward
from .space import Dimension, HyperParamSpace, default_space

__version__ = "0.1.0"

__all__ = [
    "ArmStats", "FlatBanditState", "Ranking", "rank_arms", "ucb_score", "update_arm",
    "HierUCBTuner", "RandomTuner", "ThompsonTuner", "UCBTuner", "make_tuner",
    "OracleTable", "RunConfig", "Trajectory", "aggregate_seeds", "grid_search",
    "model_switch_run", "recall_at_x", "run_experiment", "sweep",
    "HierState", "QueryOutcome", "RewardParams", "batch_reward", "compute_reward",
    "Dimension", "HyperParamSpace", "default_space",
]
