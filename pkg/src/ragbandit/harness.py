"""Experiment orchestration: oracle, online runs, recall curves, sweeps.

Seed scheme: replicate ``r`` of a run with master seed ``m`` uses
``SeedSequence(m, spawn_key=(r,)).generate_state(1)[0]``. Every sweep cell
reuses the same replicate seeds, so cells differ only in their overrides.
Within a run the seed is split into a selection stream and an environment
stream (see ``BaseTuner.initialize``).
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import check_choice, check_nonnegative_real, check_positive_int
from .bandit import Ranking
from .estimators import TrialRecord, canonical_method, make_tuner
from .exceptions import ConfigError
from .hier import ALL_ACTIVE, UPDATE_SCOPES
from .reward import RewardParams

CHECKPOINT_EVERY = 25
CONTINUE, RESET = "continue", "reset"


@dataclass
class OracleTable:
    """Exact per-config mean reward and the resulting ranking."""

    means: np.ndarray
    ranking: Ranking
    eval_count: int

    @classmethod
    def from_means(cls, means, eval_count=0):
        means = np.asarray(means, dtype=float)
        order = sorted(range(len(means)), key=lambda i: (-means[i], i))
        return cls(means, Ranking([(i, float(means[i])) for i in order]), int(eval_count))

    def top(self, x):
        return self.ranking.top(x)

    def __len__(self):
        return len(self.means)


def grid_search(env, reward: RewardParams | None = None) -> OracleTable:
    """Exhaustively score every configuration of an environment."""
    if not getattr(env, "exhaustive", False):
        raise ConfigError(f"environment {env.name!r} does not support exhaustive evaluation")
    reward = reward or RewardParams(t_max=env.t_max)
    means = env.expected_rewards(reward)
    return OracleTable.from_means(means, eval_count=env.space.cardinality * env.n_queries)


def recall_at_x(method_ranking, oracle, x) -> float:
    """Share of the method's top-x configs that are in the oracle's top-x."""
    oracle_ranking = oracle.ranking if isinstance(oracle, OracleTable) else oracle
    n = len(oracle_ranking.entries)
    if isinstance(x, bool) or not 1 <= x <= n:
        raise ConfigError(f"x must lie in [1, {n}], got {x}")
    if len(method_ranking.entries) < x:
        raise ConfigError(f"method ranking has fewer than {x} entries")
    return len(set(method_ranking.top(x)) & set(oracle_ranking.top(x))) / x


@dataclass(frozen=True)
class RunConfig:
    """One online tuning run. ``budget`` is T*B; the trial count T is ``budget // batch_size``."""

    method: str = "hier-ucb"
    budget: int = 6000
    batch_size: int = 4
    reward: RewardParams = field(default_factory=RewardParams)
    alpha: float = 1.0
    alpha_high: float = 1.0
    alpha_low: float = 1.0
    update_scope: str = ALL_ACTIVE
    obs_variance: float = 1.0
    initial_config: tuple | None = None
    seed: int = 0
    recall_x: int = 5
    checkpoint_every: int = CHECKPOINT_EVERY
    eval_checkpoints: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.budget, "budget")
        if self.budget < self.batch_size:
            raise ConfigError(f"budget {self.budget} is smaller than one batch of {self.batch_size}")
        check_positive_int(self.recall_x, "recall_x")
        check_positive_int(self.checkpoint_every, "checkpoint_every")
        for name in ("alpha", "alpha_high", "alpha_low", "obs_variance"):
            check_nonnegative_real(getattr(self, name), name)
        check_choice(self.update_scope, UPDATE_SCOPES, "update_scope")
        if not isinstance(self.reward, RewardParams):
            raise ConfigError("reward must be a RewardParams")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.eval_checkpoints is not None:
            points = tuple(int(b) for b in self.eval_checkpoints)
            if any(b % self.batch_size or b < self.batch_size or b > self.total_evals for b in points):
                raise ConfigError(f"eval_checkpoints must be multiples of B={self.batch_size} within the budget")
            object.__setattr__(self, "eval_checkpoints", tuple(sorted(set(points))))

    @property
    def n_trials(self):
        return self.budget // self.batch_size

    @property
    def total_evals(self):
        return self.n_trials * self.batch_size

    def checkpoint_trials(self, start=0, stop=None):
        """Trial counts (1-based) in ``(start, stop]`` at which recall is recorded."""
        stop = self.n_trials if stop is None else stop
        if self.eval_checkpoints is not None:
            points = {b // self.batch_size for b in self.eval_checkpoints}
        else:
            points = set(range(self.checkpoint_every, stop + 1, self.checkpoint_every))
        points.add(stop)
        return sorted(p for p in points if start < p <= stop)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def tuner(self, space):
        return make_tuner(self.method, space, alpha=self.alpha, alpha_high=self.alpha_high,
                          alpha_low=self.alpha_low, update_scope=self.update_scope,
                          obs_variance=self.obs_variance, initial_config=self.initial_config,
                          random_state=self.seed)


# fields a sweep may override
SWEEPABLE = ("method", "budget", "batch_size", "alpha", "alpha_high", "alpha_low", "update_scope",
             "obs_variance", "recall_x", "w", "penalty_threshold")


@dataclass
class Trajectory:
    method: str
    seed: int
    trials: list
    recall_curve: list  # (budget, recall)
    best_arm_rewards: list  # oracle mean reward of the method's top-ranked config, per checkpoint
    final_ranking: Ranking
    phase: str | None = None

    @property
    def budgets(self):
        return [b for b, _ in self.recall_curve]

    @property
    def recalls(self):
        return [r for _, r in self.recall_curve]


class _Recorder:
    def __init__(self, run, oracle, checkpoints, x):
        self.run, self.oracle, self.x = run, oracle, x
        self.checkpoints = set(checkpoints)
        self.curve, self.best = [], []

    def __call__(self, tuner, record):
        done = record.trial + 1
        if done in self.checkpoints:
            ranking = tuner.rank(self.x)
            self.curve.append((done * self.run.batch_size, recall_at_x(ranking, self.oracle, self.x)))
            self.best.append(float(self.oracle.means[ranking.order[0]]))


def _trajectory(run, tuner, recorder, start_trial, phase=None):
    trials = [t for t in tuner.trials_ if t.trial >= start_trial]
    return Trajectory(run.method, run.seed, trials, recorder.curve, recorder.best,
                      tuner.rank(recorder.x), phase)


def run_experiment(run: RunConfig, env, oracle: OracleTable | None = None) -> Trajectory:
    """Execute one online run and record Recall@x at each checkpoint."""
    oracle = oracle or grid_search(env, run.reward)
    x = run.recall_x
    if x > env.space.cardinality:
        raise ConfigError(f"recall_x={x} exceeds the {env.space.cardinality} configurations")
    tuner = run.tuner(env.space)
    recorder = _Recorder(run, oracle, run.checkpoint_trials(), x)
    tuner.fit(env, run.n_trials, batch_size=run.batch_size, reward=run.reward, callback=recorder)
    return _trajectory(run, tuner, recorder, 0)


def model_switch_run(run: RunConfig, env_phase1, env_phase2, switch_budget, mode=CONTINUE,
                     oracles=None, on_switch=None):
    """Run on ``env_phase1`` until ``switch_budget`` evaluations, then on ``env_phase2``.

    ``continue`` keeps all learner statistics across the switch; ``reset``
    zeroes them (random streams carry on in both cases). Phase-2 recall is
    measured against phase 2's own oracle. ``on_switch(tuner)`` is called
    right after the switch, before the first phase-2 trial.
    Returns ``(phase1_trajectory, phase2_trajectory, tuner)``.
    """
    mode = check_choice(str(mode).lower(), (CONTINUE, RESET), "mode")
    if env_phase1.space != env_phase2.space:
        raise ConfigError("both phases must share one search space")
    if switch_budget % run.batch_size or not 0 < switch_budget < run.total_evals:
        raise ConfigError(f"switch_budget must be a multiple of B inside (0, {run.total_evals})")
    o1, o2 = oracles or (grid_search(env_phase1, run.reward), grid_search(env_phase2, run.reward))
    x = run.recall_x
    switch_trial = switch_budget // run.batch_size
    tuner = run.tuner(env_phase1.space)

    rec1 = _Recorder(run, o1, run.checkpoint_trials(0, switch_trial), x)
    tuner.fit(env_phase1, switch_trial, batch_size=run.batch_size, reward=run.reward, callback=rec1)
    phase1 = _trajectory(run, tuner, rec1, 0, phase="phase1")

    if mode == RESET:
        tuner.reset()
    if on_switch is not None:
        on_switch(tuner)
    # trial numbering restarts after a reset, so track the phase-2 trials by position
    start = len(tuner.trials_)
    rec2 = _Recorder(run, o2, (), x)
    rec2.checkpoints = {p - switch_trial for p in run.checkpoint_trials(switch_trial)}
    offset = switch_trial

    def phase2_callback(t, record):
        done = len(t.trials_) - start
        if done in rec2.checkpoints:
            ranking = t.rank(x)
            rec2.curve.append(((offset + done) * run.batch_size, recall_at_x(ranking, o2, x)))
            rec2.best.append(float(o2.means[ranking.order[0]]))

    tuner.partial_fit(env_phase2, run.n_trials - switch_trial, batch_size=run.batch_size,
                      reward=run.reward, callback=phase2_callback)
    phase2 = Trajectory(run.method, run.seed, tuner.trials_[start:], rec2.curve, rec2.best,
                        tuner.rank(x), "phase2")
    return phase1, phase2, tuner


@dataclass
class AggregateCurve:
    method: str
    budgets: list
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int


def aggregate_seeds(trajectories: Sequence[Trajectory]) -> AggregateCurve:
    """Pointwise mean and sample standard deviation of recall curves."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    budgets = trajectories[0].budgets
    for t in trajectories[1:]:
        if t.budgets != budgets:
            raise ValueError("trajectories have misaligned checkpoints")
    # sorting each column makes the result independent of replicate order
    values = np.sort(np.array([t.recalls for t in trajectories], dtype=float), axis=0)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if len(trajectories) > 1 else np.zeros(len(budgets))
    return AggregateCurve(trajectories[0].method, list(budgets), mean, std, len(trajectories))


def derive_seeds(master_seed, n_seeds):
    """Per-replicate run seeds from a master seed (counter scheme)."""
    n_seeds = check_positive_int(n_seeds, "n_seeds")
    return [int(np.random.SeedSequence(master_seed, spawn_key=(r,)).generate_state(1)[0])
            for r in range(n_seeds)]


def _run_one(args):
    run, env, oracle = args
    return run_experiment(run, env, oracle)


def run_seeds(run: RunConfig, env, seeds, oracle=None, parallel=1):
    """One trajectory per seed, in seed order."""
    oracle = oracle or grid_search(env, run.reward)
    jobs = [(run.replace(seed=s), env, oracle) for s in seeds]
    if parallel and parallel > 1 and len(jobs) > 1 and _picklable(env):
        with ProcessPoolExecutor(max_workers=min(parallel, len(jobs))) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _picklable(env):
    import pickle
    try:
        pickle.dumps(env)
        return True
    except Exception:
        return False


# short names accepted in sweep grids
SWEEP_ALIASES = {"B": "batch_size", "alpha_h": "alpha_high", "alpha_l": "alpha_low"}


def _sweep_key(key):
    name = SWEEP_ALIASES.get(key, key)
    if name not in SWEEPABLE:
        raise ConfigError(f"cannot sweep over {key!r}; sweepable fields are {', '.join(SWEEPABLE)}")
    return name


def apply_overrides(base: RunConfig, overrides: dict) -> RunConfig:
    changes, reward_changes = {}, {}
    for key, value in overrides.items():
        key = _sweep_key(key)
        if key in ("w", "penalty_threshold"):
            reward_changes[key] = value
        else:
            changes[key] = value
    if reward_changes:
        changes["reward"] = dataclasses.replace(base.reward, **reward_changes)
    return base.replace(**changes)


@dataclass
class SweepCell:
    overrides: dict
    run: RunConfig
    trajectories: list
    aggregate: AggregateCurve

    @property
    def label(self):
        if not self.overrides:
            return "base"
        return "_".join(f"{k}={v}" for k, v in self.overrides.items())


def sweep(base: RunConfig, grid: dict, env, seeds, parallel=1):
    """Run the Cartesian product of ``grid`` overrides, all on the same seed list."""
    for key in grid:
        _sweep_key(key)
    keys = list(grid)
    cells = []
    oracles = {}
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        run = apply_overrides(base, overrides)
        if run.reward not in oracles:
            oracles[run.reward] = grid_search(env, run.reward)
        trajectories = run_seeds(run, env, seeds, oracles[run.reward], parallel)
        cells.append(SweepCell(overrides, run, trajectories, aggregate_seeds(trajectories)))
    return cells


def budget_ratio(run_budget, n_configs, n_queries):
    """Online evaluations as a share of exhaustive grid-search evaluations."""
    return run_budget / (n_configs * n_queries)


# -- files -----------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def write_trial_log(trajectory: Trajectory, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial", "config_id", "pulled_dimension", "reward"])
        for t in trajectory.trials:
            writer.writerow([t.trial, t.config_index, _fmt(t.pulled_dimension), _fmt(float(t.reward))])


def read_trial_log(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["trial"]), int(row["config_id"]),
                         int(row["pulled_dimension"]) if row["pulled_dimension"] else None,
                         float(row["reward"])))
    return rows


def write_results(trajectories, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "seed", "budget", "recall", "mean_reward_best_arm"])
        for t in trajectories:
            for (budget, recall), best in zip(t.recall_curve, t.best_arm_rewards):
                writer.writerow([t.method, t.seed, budget, _fmt(float(recall)), _fmt(best)])


def write_aggregate(curves, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "budget", "recall_mean", "recall_std"])
        for curve in curves:
            for b, m, s in zip(curve.budgets, curve.mean, curve.std):
                writer.writerow([curve.method, b, _fmt(float(m)), _fmt(float(s))])


def write_oracle(oracle: OracleTable, space, path, config_ids=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "config_index", "config_id", *space.names, "mean_reward"])
        for rank, (idx, mean) in enumerate(oracle.ranking.entries, start=1):
            named = space.named(space.config_at(idx))
            cid = config_ids[idx] if config_ids else str(idx)
            writer.writerow([rank, idx, cid, *named.values(), _fmt(float(mean))])


def read_oracle(path, space) -> OracleTable:
    means = np.full(space.cardinality, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            means[int(row["config_index"])] = float(row["mean_reward"])
    if np.isnan(means).any():
        raise ConfigError(f"oracle file {path} does not cover every configuration")
    return OracleTable.from_means(means)


def default_parallelism():
    return os.cpu_count() or 1
