from __future__ import annotations

import numpy as np

from ..exceptions import ConfigError


class Environment:
    """Something that evaluates a configuration on a batch of queries.

    Subclasses set ``space``, ``t_max`` and ``name`` and implement
    ``evaluate``. Environments that can enumerate their exact per-config mean
    reward (replay tables, analytic landscapes) set ``exhaustive = True`` and
    implement ``expected_rewards``.
    """

    name = "environment"
    exhaustive = False

    def evaluate(self, config, batch_size, rng):
        raise NotImplementedError

    def expected_rewards(self, params) -> np.ndarray:
        raise ConfigError(f"{type(self).__name__} does not support exhaustive evaluation")

    @property
    def n_queries(self):
        """Queries in the underlying dataset, or 0 when means are analytic."""
        return 0

    @property
    def descriptor(self):
        return {"name": self.name, "space": self.space.to_dict(), "t_max": self.t_max}
