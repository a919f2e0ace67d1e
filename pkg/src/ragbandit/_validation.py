"""Input validation helpers used by estimators, environments and the harness."""
from __future__ import annotations

import math
import numbers

import numpy as np

from .exceptions import ConfigError


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts None, an int, a ``SeedSequence`` or an existing ``Generator``
    (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ConfigError(f"cannot use {seed!r} to seed a random generator")


def check_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        if seed is not None and seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        return np.random.SeedSequence(seed)
    raise ConfigError(f"cannot build a seed sequence from {seed!r}")


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative_real(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def check_unit_interval(value, name):
    value = check_nonnegative_real(value, name)
    if value > 1:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_choice(value, choices, name):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
