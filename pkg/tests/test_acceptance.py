"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""
import math
import time
from collections import defaultdict

import numpy as np
import pytest
from fastapi.testclient import TestClient
from scipy.stats import binomtest

from ragbandit.bandit import FlatBanditState, select_arm, update_arm
from ragbandit.cli import main
from ragbandit.environment import gen_landscape, gen_landscape_pair
from ragbandit.estimators import make_tuner
from ragbandit.harness import (CONTINUE, RESET, RunConfig, Trajectory, budget_ratio, derive_seeds, grid_search,
                               model_switch_run, read_trial_log, recall_at_x, run_seeds, write_results,
                               write_trial_log)
from ragbandit.bandit import Ranking
from ragbandit.reward import QueryOutcome, RewardParams, compute_reward
from ragbandit.service import SessionManager, create_app
from ragbandit.space import default_space

from conftest import make_replay

FLAT = ["hier-ucb", "ucb", "thompson"]
ALL = FLAT + ["random"]


def _final_recalls(method, env, oracle, budget, n_seeds, master=0, **kw):
    run = RunConfig(method=method, budget=budget, batch_size=4, **kw)
    return np.array([t.recalls[-1] for t in run_seeds(run, env, derive_seeds(master, n_seeds), oracle)])


def test_oracle_exactness(verdict):
    table = make_replay(default_space(2), 32)
    start = time.perf_counter()
    oracle = grid_search(table, RewardParams(t_max=table.t_max))
    elapsed = time.perf_counter() - start
    p = RewardParams(t_max=table.t_max)
    direct = [sum(compute_reward(table.outcome(c, j), p) for j in range(32)) / 32 for c in range(25)]
    exact = all(oracle.means[c] == direct[c] for c in range(25))
    self_recall = recall_at_x(oracle.ranking, oracle, 5)
    ok = exact and self_recall == 1.0 and elapsed < 1.0
    verdict(1, "oracle exactness", ok, f"exact={exact}, self recall={self_recall}, {elapsed:.3f}s")
    assert ok


def test_easy_regime_convergence(verdict):
    space = default_space(3)
    env = gen_landscape("easy", space, seed=0)
    oracle = grid_search(env)
    start = time.perf_counter()
    means = {m: _final_recalls(m, env, oracle, 6000, 10).mean() for m in FLAT}
    elapsed = time.perf_counter() - start
    ratio = budget_ratio(6000, space.cardinality, 350)
    ok = all(v >= 0.7 for v in means.values()) and abs(ratio - 0.229) < 5e-4 and elapsed < 120
    detail = ", ".join(f"{m}={v:.3f}" for m, v in means.items())
    verdict(2, "easy-regime convergence", ok, f"Recall@5 {detail}; budget ratio {ratio:.3f}; {elapsed:.0f}s")
    assert ok


def test_medium_regime_advantage(verdict):
    env = gen_landscape("medium", default_space(3), seed=0)
    oracle = grid_search(env)
    recalls = {m: _final_recalls(m, env, oracle, 2500, 20) for m in ALL}
    hier = recalls["hier-ucb"]
    margins, pvalues = {}, {}
    for m in ALL[1:]:
        margins[m] = hier.mean() - recalls[m].mean()
        wins, losses = int((hier > recalls[m]).sum()), int((hier < recalls[m]).sum())
        pvalues[m] = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    ok = all(v >= 0.03 for v in margins.values()) and all(p < 0.1 for p in pvalues.values())
    detail = ", ".join(f"{m}={recalls[m].mean():.3f}" for m in ALL)
    worst = min(margins, key=margins.get)
    verdict(3, "medium-regime advantage", ok,
            f"Recall@5 {detail}; smallest margin {margins[worst]:+.3f} vs {worst} (sign-test p={pvalues[worst]:.3g})")
    assert ok


def test_hard_regime_ceiling(verdict):
    env = gen_landscape("hard", default_space(3), seed=0)
    oracle = grid_search(env)
    means = {m: _final_recalls(m, env, oracle, 6000, 10).mean() for m in ALL}
    ok = max(means.values()) <= 0.55
    verdict(4, "hard-regime ceiling", ok, "Recall@5 " + ", ".join(f"{m}={v:.3f}" for m, v in means.items()))
    assert ok


def test_ucb_statistical_sanity(verdict):
    start = time.perf_counter()
    truth = np.full(10, 0.5)
    truth[3] = 0.9
    shares = []
    for seed in derive_seeds(5, 10):
        rng = np.random.default_rng(seed)
        state = FlatBanditState.fresh(10)
        for _ in range(10000):
            arm = select_arm(state, rng)
            update_arm(state, arm, float(rng.normal(truth[arm], 0.3)))
        shares.append(state.arms[3].pulls / 10000)
    elapsed = time.perf_counter() - start
    ok = np.mean(shares) >= 0.8 and elapsed < 10
    verdict(5, "UCB statistical sanity", ok, f"best-arm share {np.mean(shares):.3f}; {elapsed:.1f}s")
    assert ok


def test_continue_beats_reset(verdict):
    space = default_space(3)
    env1, env2 = gen_landscape_pair("medium", space, seed=0)
    oracles = (grid_search(env1), grid_search(env2))
    in_top5 = oracles[1].top(1)[0] in oracles[0].top(5)
    run = RunConfig(method="hier-ucb", budget=12000, batch_size=1)
    at_half = {}
    for mode in (CONTINUE, RESET):
        vals = []
        for s in derive_seeds(0, 10):
            _, phase2, _ = model_switch_run(run.replace(seed=s), env1, env2, 6000, mode, oracles)
            vals.append(dict(phase2.recall_curve)[9000])
        at_half[mode] = float(np.mean(vals))
    gap = at_half[CONTINUE] - at_half[RESET]
    ok = in_top5 and gap >= 0.05
    verdict(6, "continue vs reset", ok,
            f"Recall@5 at half phase-2 budget: continue={at_half[CONTINUE]:.3f}, reset={at_half[RESET]:.3f} "
            f"(gap {gap:+.3f})")
    assert ok


def test_reward_algebra_fuzz(verdict):
    rng = np.random.default_rng(2024)
    n = 100_000
    violations = 0
    for i in range(n):
        t_max = int(rng.integers(1, 5000))
        p = RewardParams(w=float(rng.uniform()), t_max=t_max, penalty_threshold=float(rng.uniform(0, 0.3)))
        acc, tok = float(rng.uniform()), int(rng.integers(0, t_max + 1))
        r = compute_reward(QueryOutcome(acc, tok), p)
        more_acc = compute_reward(QueryOutcome(min(1.0, acc + float(rng.uniform(0, 0.2))), tok), p)
        more_tok = compute_reward(QueryOutcome(acc, min(t_max, tok + int(rng.integers(0, 100)))), p)
        bad = not (-1.0 <= r <= p.w) or more_acc < r or more_tok > r
        other_tok = int(rng.integers(0, t_max + 1))
        w1 = RewardParams(w=1.0, t_max=t_max, penalty_threshold=p.penalty_threshold)
        bad |= compute_reward(QueryOutcome(acc, tok), w1) != compute_reward(QueryOutcome(acc, other_tok), w1)
        w0 = RewardParams(w=0.0, t_max=t_max, penalty_threshold=p.penalty_threshold)
        bad |= compute_reward(QueryOutcome(acc, tok), w0) != compute_reward(QueryOutcome(float(rng.uniform()), tok), w0)
        violations += bad
    ok = violations == 0
    verdict(7, "reward algebra fuzz", ok, f"{violations} violations in {n} inputs")
    assert ok


def _recount(rows, space, method):
    """Arm statistics rebuilt from a trial log with plain sums."""
    sums = defaultdict(list)
    for _, config_id, dim, reward in rows:
        config = space.config_at(config_id)
        sums[("config", config)].append(reward)
        if method == "hier-ucb":
            sums[("high", dim)].append(reward)
            for d, level in enumerate(config):
                sums[("low", d, level)].append(reward)
    return {k: (len(v), math.fsum(v) / len(v)) for k, v in sums.items()}


def _learned(tuner, space, method):
    out = {}
    if method == "hier-ucb":
        s = tuner.state_
        out.update({("config", c): (a.pulls, a.mean_reward) for c, a in s.config_stats.items()})
        out.update({("high", d): (a.pulls, a.mean_reward) for d, a in enumerate(s.high_level) if a.pulls})
        out.update({("low", d, lv): (a.pulls, a.mean_reward)
                    for d, arms in enumerate(s.low_level) for lv, a in enumerate(arms) if a.pulls})
    else:
        out.update({("config", space.config_at(i)): (a.pulls, a.mean_reward)
                    for i, a in enumerate(tuner.state_.arms) if a.pulls})
    return out


def test_determinism_and_log_replay(verdict, tmp_path):
    space = default_space(3)
    env = gen_landscape("medium", space, seed=1)
    identical, worst, counts_match = True, 0.0, True
    for method in ALL:
        files = []
        for rep in range(2):
            tuner = make_tuner(method, space, random_state=77).fit(env, 1500, batch_size=4)
            traj = Trajectory(method, 77, tuner.trials_, [], [], Ranking([]))
            path = tmp_path / f"{method}_{rep}.csv"
            write_trial_log(traj, path)
            files.append(path.read_bytes())
        identical &= files[0] == files[1]
        replayed = _recount(read_trial_log(path), space, method)
        learned = _learned(tuner, space, method)
        counts_match &= replayed.keys() == learned.keys()
        for key, (pulls, mean) in learned.items():
            counts_match &= replayed.get(key, (None,))[0] == pulls
            worst = max(worst, abs(replayed.get(key, (0, math.inf))[1] - mean))
    # the full command-line pipeline, run twice
    outs = []
    for rep in range(2):
        out = tmp_path / f"cli{rep}"
        assert main(["run", "--out", str(out), "--method", "hier-ucb", "--method", "thompson",
                     "--seeds", "3", "--budget", "1000", "--seed", "11"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "resolved-config.json"})
    identical &= outs[0] == outs[1]
    ok = identical and counts_match and worst <= 1e-9
    verdict(8, "determinism and log replay", ok,
            f"byte-identical={identical}, pulls match={counts_match}, max mean error {worst:.2e}")
    assert ok


class FaultyClient:
    """Drives a session like a flaky pipeline: lost replies, blind retries, duplicates, bad payloads."""

    def __init__(self, client, rng):
        self.client, self.rng = client, rng
        self.accepted = 0
        self.requests = 0

    def report(self, sid, suggestion_id, outcomes):
        body = {"suggestion_id": suggestion_id, "outcomes": outcomes}
        if self.rng.random() < 0.15:
            bad = [{"accuracy": 1.5, "tokens": 10}]
            self._post(sid, {"suggestion_id": suggestion_id, "outcomes": bad})
        attempts = 1 + int(self.rng.integers(0, 3))  # the reply may be "lost", so the client retries
        for _ in range(attempts):
            self._post(sid, body)
        if self.rng.random() < 0.1:
            self._post(sid, {"suggestion_id": "sg-bogus", "outcomes": outcomes})

    def _post(self, sid, body):
        self.requests += 1
        r = self.client.post(f"/sessions/{sid}/report", json=body)
        if r.status_code == 200:
            self.accepted += 1
        else:
            assert r.status_code in (409, 422), r.text


def _script(client, sid, rng):
    out = []
    for _ in range(15):
        s = client.post(f"/sessions/{sid}/suggest")
        out.append(s.content)
        outcomes = [{"accuracy": float(a), "tokens": int(t)}
                    for a, t in zip(rng.uniform(size=4).round(3), rng.integers(0, 1585, size=4))]
        out.append(client.post(f"/sessions/{sid}/report", json={
            "suggestion_id": s.json()["suggestion_id"], "outcomes": outcomes}).content)
        out.append(client.get(f"/sessions/{sid}/ranking", params={"x": 5}).content)
    return out


def test_service_exactly_once(verdict):
    manager = SessionManager(clock=lambda: 0.0)
    client = TestClient(create_app(manager))
    rng = np.random.default_rng(9)
    faulty = FaultyClient(client, rng)
    sids = [client.post("/sessions", json={"method": m, "seed": 3, "batch_size": 4}).json()["session_id"]
            for m in ALL]
    for _ in range(150):
        for sid in sids:
            batch = []
            for _ in range(int(rng.integers(1, 3))):
                batch.append(client.post(f"/sessions/{sid}/suggest").json()["suggestion_id"])
            for suggestion_id in batch:
                outcomes = [{"accuracy": float(rng.uniform()), "tokens": int(rng.integers(0, 1585))}
                            for _ in range(4)]
                faulty.report(sid, suggestion_id, outcomes)
    described = [client.get(f"/sessions/{sid}").json() for sid in sids]
    updates = sum(d["updates"] for d in described)
    trials = sum(d["trials"] for d in described)
    counted = faulty.accepted == updates == trials == sum(d["accepted_reports"] for d in described)
    counted &= all(d["pending"] == 0 for d in described)

    same = True
    for sid in sids:
        blob = client.post(f"/sessions/{sid}/snapshot").json()["blob"]
        clone = client.post("/sessions/restore", json={"blob": blob}).json()["session_id"]
        same &= _script(client, sid, np.random.default_rng(1)) == _script(client, clone, np.random.default_rng(1))
    ok = counted and same
    verdict(9, "service exactly-once", ok,
            f"{faulty.requests} report requests, {faulty.accepted} accepted, {updates} learner updates; "
            f"restored sessions byte-identical={same}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
