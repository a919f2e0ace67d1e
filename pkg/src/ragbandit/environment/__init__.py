from .base import Environment
from .landscape import (EASY, HARD, MEDIUM, REGIMES, LandscapeModel, expected_penalized_accuracy,
                        gen_landscape, gen_landscape_pair, regime_holds, regime_report,
                        synth_evaluate)
from .remote import RemoteEnvironment, parse_outcomes, remote_evaluate
from .replay import ReplayTable, load_replay, replay_evaluate, scan_replay, write_replay

__all__ = [
    "Environment", "LandscapeModel", "RemoteEnvironment", "ReplayTable",
    "EASY", "MEDIUM", "HARD", "REGIMES",
    "expected_penalized_accuracy", "gen_landscape", "gen_landscape_pair", "regime_holds",
    "regime_report", "synth_evaluate",
    "remote_evaluate", "parse_outcomes",
    "load_replay", "replay_evaluate", "scan_replay", "write_replay",
]
