"""Discrete hyper-parameter search spaces.

A configuration is a tuple of level indices, one per dimension. Configurations
are also addressed by a flat index in row-major order (first dimension most
significant), so flat-index order and lexicographic order coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Any, Sequence

from .exceptions import ConfigError

Config = tuple  # tuple[int, ...] of level indices

TOP_K_LEVELS = (1, 3, 5, 7, 9)
COMPRESSION_LEVELS = (0.3, 0.5, 0.7, 0.9, 1)
EMBEDDING_LEVELS = ("mpnet", "ada_002", "contriever")


@dataclass(frozen=True)
class Dimension:
    name: str
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError(f"dimension name must be a non-empty string, got {self.name!r}")
        if len(self.levels) < 2:
            raise ConfigError(f"dimension {self.name!r} needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise ConfigError(f"dimension {self.name!r} has duplicate levels")

    def __len__(self):
        return len(self.levels)

    def index(self, level):
        try:
            return self.levels.index(level)
        except ValueError:
            raise ConfigError(f"{level!r} is not a level of dimension {self.name!r}") from None


class HyperParamSpace:
    """An ordered product of discrete dimensions."""

    def __init__(self, dimensions: Sequence[Dimension]):
        dims = tuple(d if isinstance(d, Dimension) else Dimension(*d) for d in dimensions)
        if not dims:
            raise ConfigError("a search space needs at least one dimension")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate dimension names in {names}")
        self.dimensions = dims
        self.shape = tuple(len(d) for d in dims)
        self._strides = tuple(math.prod(self.shape[i + 1:]) for i in range(len(dims)))

    @classmethod
    def from_dict(cls, spec: dict) -> "HyperParamSpace":
        """Build from ``{name: [levels...]}`` (insertion order kept)."""
        return cls([Dimension(name, tuple(levels)) for name, levels in spec.items()])

    def to_dict(self) -> dict:
        return {d.name: list(d.levels) for d in self.dimensions}

    @property
    def names(self):
        return tuple(d.name for d in self.dimensions)

    @property
    def n_dims(self):
        return len(self.dimensions)

    @property
    def cardinality(self):
        return math.prod(self.shape)

    def __len__(self):
        return self.cardinality

    def __eq__(self, other):
        return isinstance(other, HyperParamSpace) and self.dimensions == other.dimensions

    def __hash__(self):
        return hash(self.dimensions)

    def __repr__(self):
        return f"HyperParamSpace({self.to_dict()!r})"

    def check_config(self, config) -> Config:
        config = tuple(int(i) for i in config)
        if len(config) != self.n_dims:
            raise ConfigError(f"config {config} has {len(config)} entries, space has {self.n_dims} dimensions")
        for i, (idx, size) in enumerate(zip(config, self.shape)):
            if not 0 <= idx < size:
                raise ConfigError(f"level index {idx} out of range for dimension {self.dimensions[i].name!r}")
        return config

    def check_index(self, index) -> int:
        if isinstance(index, bool) or not 0 <= int(index) < self.cardinality or int(index) != index:
            raise ConfigError(f"config index {index!r} out of range [0, {self.cardinality})")
        return int(index)

    def index_of(self, config) -> int:
        config = self.check_config(config)
        return sum(i * s for i, s in zip(config, self._strides))

    def config_at(self, index) -> Config:
        index = self.check_index(index)
        return tuple((index // s) % n for s, n in zip(self._strides, self.shape))

    def configs(self):
        """All configurations in flat-index order."""
        return list(product(*(range(n) for n in self.shape)))

    def named(self, config) -> dict[str, Any]:
        config = self.check_config(config)
        return {d.name: d.levels[i] for d, i in zip(self.dimensions, config)}

    def from_named(self, named: dict) -> Config:
        missing = set(self.names) - set(named)
        extra = set(named) - set(self.names)
        if missing or extra:
            raise ConfigError(f"named config mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        return tuple(d.index(named[d.name]) for d in self.dimensions)

    def midpoint(self) -> Config:
        return tuple((n - 1) // 2 for n in self.shape)


def default_space(n_params: int = 3) -> HyperParamSpace:
    """The top-k / compression-ratio (/ embedding) space used in the RAG experiments."""
    dims = [Dimension("top_k", TOP_K_LEVELS), Dimension("compression", COMPRESSION_LEVELS)]
    if n_params == 3:
        dims.append(Dimension("embedding", EMBEDDING_LEVELS))
    elif n_params != 2:
        raise ConfigError(f"the default space has 2 or 3 parameters, got {n_params}")
    return HyperParamSpace(dims)
