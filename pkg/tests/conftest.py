import numpy as np
import pytest

from ragbandit.environment import LandscapeModel, write_replay
from ragbandit.space import Dimension, HyperParamSpace, default_space


@pytest.fixture
def space2():
    return default_space(2)


@pytest.fixture
def space3():
    return default_space(3)


@pytest.fixture
def tiny_space():
    return HyperParamSpace([Dimension("a", (0, 1)), Dimension("b", ("x", "y"))])


def make_replay(space, n_queries=32, seed=0):
    """A replay table drawn from a random smooth landscape."""
    rng = np.random.default_rng(seed)
    acc = rng.uniform(0.2, 0.9, size=space.cardinality)
    tokens = rng.integers(100, 1500, size=space.cardinality)
    model = LandscapeModel(space, acc, tokens, noise_std=0.3)
    return model.sample_replay(n_queries, seed=seed + 1)


@pytest.fixture
def replay25(space2):
    return make_replay(space2, 32)


@pytest.fixture
def replay_file(tmp_path, replay25):
    path = tmp_path / "fixture.csv"
    write_replay(replay25, path)
    return path


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
