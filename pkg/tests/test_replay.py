import json
import math

import numpy as np
import pytest

from ragbandit.environment import ReplayTable, load_replay, replay_evaluate, scan_replay, write_replay
from ragbandit.environment.replay import manifest_path_for
from ragbandit.exceptions import ConfigError, ReplayFormatError
from ragbandit.reward import RewardParams, batch_reward, compute_reward
from ragbandit.space import default_space

from conftest import make_replay


def test_round_trip(replay_file, replay25):
    table = load_replay(replay_file)
    assert len(table) == 25 * 32
    assert table.records == replay25.records
    assert manifest_path_for(replay_file).exists()


def test_cardinality_8_queries(tmp_path, space2):
    table = make_replay(space2, 8)
    write_replay(table, tmp_path / "r.csv")
    assert len(load_replay(tmp_path / "r.csv")) == 200


def _rewrite(path, fn):
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(fn(lines)))


def test_missing_pair_named(replay_file):
    dropped = replay_file.read_text().splitlines()[5].split(",")
    _rewrite(replay_file, lambda lines: lines[:5] + lines[6:])
    with pytest.raises(ReplayFormatError) as info:
        load_replay(replay_file)
    assert info.value.problems == [f"missing record for config_id {dropped[0]!r}, query {dropped[1]}"]


def test_out_of_range_row_reports_line(replay_file):
    def corrupt(lines):
        parts = lines[3].rstrip("\n").split(",")
        parts[2] = "1.2"
        lines[3] = ",".join(parts) + "\n"
        return lines
    _rewrite(replay_file, corrupt)
    table, problems, _ = scan_replay(replay_file)
    assert table is None
    assert any(p.startswith("line 4:") and "1.2" in p for p in problems)


def test_malformed_and_duplicate_rows(replay_file):
    _rewrite(replay_file, lambda lines: lines + [lines[1], "c000,x,0.5,10\n", "c000,1\n"])
    _, problems, _ = scan_replay(replay_file)
    text = "\n".join(problems)
    assert "duplicate record" in text and "unparsable" in text and "expected 4 fields" in text


def test_unknown_config_id(replay_file):
    _rewrite(replay_file, lambda lines: lines + ["c999,0,0.5,10\n"])
    _, problems, _ = scan_replay(replay_file)
    assert any("c999" in p for p in problems)


def test_manifest_missing_entry(replay_file):
    m = manifest_path_for(replay_file)
    doc = json.loads(m.read_text())
    del doc["configs"]["c003"]
    m.write_text(json.dumps(doc))
    _, problems, _ = scan_replay(replay_file)
    assert any("c003" in p for p in problems)


def test_bad_header(replay_file):
    _rewrite(replay_file, lambda lines: ["a,b,c,d\n"] + lines[1:])
    with pytest.raises(ReplayFormatError):
        scan_replay(replay_file)


def test_token_overflow_warns(tmp_path, space2):
    t = make_replay(space2, 2)
    t.tokens[0, 0] = t.t_max + 50
    write_replay(t, tmp_path / "w.csv")
    table, problems, warnings = scan_replay(tmp_path / "w.csv")
    assert not problems and warnings


def test_replay_evaluate_contracts(replay25):
    rng = np.random.default_rng(0)
    config = replay25.space.config_at(7)
    full = replay_evaluate(replay25, config, 32, rng)
    recorded = [replay25.outcome(7, j) for j in range(32)]
    assert sorted((o.accuracy, o.tokens) for o in full) == sorted((o.accuracy, o.tokens) for o in recorded)
    with pytest.raises(ConfigError):
        replay_evaluate(replay25, config, 33, rng)
    one = ReplayTable(default_space(2), [0], np.full((25, 1), 0.5), np.full((25, 1), 10))
    assert replay_evaluate(one, (0, 0), 1, rng)[0].accuracy == 0.5


def test_replay_determinism(replay25):
    a = replay_evaluate(replay25, (1, 1), 4, np.random.default_rng(3))
    b = replay_evaluate(replay25, (1, 1), 4, np.random.default_rng(3))
    assert a == b


def test_sampled_mean_matches_exact_mean(replay25):
    p = RewardParams(t_max=replay25.t_max)
    exact = replay25.expected_rewards(p)[7]
    rng = np.random.default_rng(1)
    config = replay25.space.config_at(7)
    draws = [batch_reward(replay_evaluate(replay25, config, 4, rng), p) for _ in range(10000)]
    assert abs(np.mean(draws) - exact) < 0.01


def test_expected_rewards_is_ascending_query_sum(replay25):
    p = RewardParams(t_max=replay25.t_max)
    means = replay25.expected_rewards(p)
    for c in (0, 11, 24):
        total = 0.0
        for j in range(replay25.n_queries):
            total += compute_reward(replay25.outcome(c, j), p)
        assert means[c] == total / replay25.n_queries
    assert math.isfinite(means.sum())
