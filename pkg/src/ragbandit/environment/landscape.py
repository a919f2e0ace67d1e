"""Synthetic reward landscapes with controllable difficulty.

A landscape assigns every configuration a mean accuracy and a token count.
Per-query accuracy is the mean plus Gaussian noise, clamped to [0, 1]. The
surfaces are built backwards from a target expected-reward profile so that
the gap structure of each regime holds exactly under the design reward
parameters:

* ``easy``: unimodal, the optimum beats the runner-up by at least 3 noise units;
* ``medium``: the top five sit within 1.5 noise units, then a clear drop;
* ``hard``: the best 40% of configurations sit within 1 noise unit (a plateau).

One noise unit is the standard deviation of a trial's batch-mean reward at the
reference batch size of 4: ``w * noise_std / 2``.
"""
from __future__ import annotations

import math
import numbers

import numpy as np
from scipy.stats import norm

from .._validation import check_nonnegative_real, check_seed_sequence
from ..exceptions import ConfigError
from ..reward import PROFILES, QueryOutcome, RewardParams
from ..space import HyperParamSpace
from .base import Environment
from .replay import ReplayTable

EASY, MEDIUM, HARD = "easy", "medium", "hard"
REGIMES = (EASY, MEDIUM, HARD)
REFERENCE_BATCH = 4
DEFAULT_NOISE_STD = 0.25
MEDIUM_MIN_GAP = 0.25  # drop after the top five, in noise units
HARD_PLATEAU_SPREAD = 0.15  # plateau width, in noise units

# token share of t_max: base + span * topk_frac * (floor + (1 - floor) * compression_frac)
TOKEN_BASE, TOKEN_SPAN, TOKEN_FLOOR = 0.1, 0.5, 0.3


def expected_penalized_accuracy(mu, noise_std, threshold=0.0):
    """E[g(clip(mu + noise_std * Z, 0, 1))] where g maps values <= threshold to -1."""
    mu = np.asarray(mu, dtype=float)
    if noise_std == 0:
        x = np.clip(mu, 0.0, 1.0)
        return np.where(x <= threshold, -1.0, x)
    if threshold >= 1.0:
        return np.full_like(mu, -1.0)
    a = (threshold - mu) / noise_std
    b = (1.0 - mu) / noise_std
    p_pen = norm.cdf(a)
    inside = mu * (norm.cdf(b) - p_pen) + noise_std * (norm.pdf(a) - norm.pdf(b))
    return -p_pen + inside + norm.sf(b)


def _solve_accuracy(target, noise_std, threshold, iters=80):
    """Invert ``expected_penalized_accuracy`` over mu in [0, 1] by bisection."""
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = expected_penalized_accuracy(mid, noise_std, threshold) > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


class LandscapeModel(Environment):
    exhaustive = True

    def __init__(self, space, mean_accuracy, mean_tokens, noise_std=DEFAULT_NOISE_STD, regime=None,
                 t_max=PROFILES["asqa-like"], profile="asqa-like", design_reward=None, name=None):
        self.space = space
        self.mean_accuracy = np.asarray(mean_accuracy, dtype=float)
        self.mean_tokens = np.asarray(mean_tokens, dtype=np.int64)
        if self.mean_accuracy.shape != (space.cardinality,) or self.mean_tokens.shape != (space.cardinality,):
            raise ConfigError("landscape surfaces must have one entry per configuration")
        if np.any((self.mean_accuracy < 0) | (self.mean_accuracy > 1)):
            raise ConfigError("mean accuracy must lie in [0, 1]")
        if np.any((self.mean_tokens < 0) | (self.mean_tokens > t_max)):
            raise ConfigError("mean tokens must lie in [0, t_max]")
        self.noise_std = check_nonnegative_real(noise_std, "noise_std")
        self.regime = regime
        self.t_max = int(t_max)
        self.profile = profile
        self.design_reward = design_reward or RewardParams(t_max=self.t_max)
        self.name = name or f"landscape:{regime or 'custom'}"

    def noise_scale(self, batch_size=REFERENCE_BATCH):
        """Std of a trial's batch-mean reward, ignoring clamping and the penalty."""
        return self.design_reward.w * self.noise_std / math.sqrt(batch_size)

    def evaluate(self, config, batch_size, rng):
        return synth_evaluate(self, config, batch_size, rng)

    def expected_rewards(self, params=None) -> np.ndarray:
        """Exact per-config expected reward under the noise model."""
        params = params or self.design_reward
        acc = expected_penalized_accuracy(self.mean_accuracy, self.noise_std, params.penalty_threshold)
        tokens = np.minimum(self.mean_tokens, params.t_max)
        return params.w * acc - (1.0 - params.w) * tokens / params.t_max

    def sample_replay(self, n_queries, seed=None) -> ReplayTable:
        """Draw a finite replay table from this landscape."""
        rng = np.random.default_rng(check_seed_sequence(seed))
        n = self.space.cardinality
        noise = rng.normal(0.0, self.noise_std, size=(n, n_queries))
        acc = np.clip(self.mean_accuracy[:, None] + noise, 0.0, 1.0)
        tokens = np.repeat(self.mean_tokens[:, None], n_queries, axis=1)
        return ReplayTable(self.space, range(n_queries), acc, tokens, profile=self.profile, t_max=self.t_max)

    def to_dict(self):
        return {
            "regime": self.regime,
            "profile": self.profile,
            "t_max": self.t_max,
            "noise_std": self.noise_std,
            "design_reward": {"w": self.design_reward.w, "t_max": self.design_reward.t_max,
                              "penalty_threshold": self.design_reward.penalty_threshold},
            "dimensions": self.space.to_dict(),
            "mean_accuracy": [float(x) for x in self.mean_accuracy],
            "mean_tokens": [int(x) for x in self.mean_tokens],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                HyperParamSpace.from_dict(doc["dimensions"]),
                doc["mean_accuracy"],
                doc["mean_tokens"],
                noise_std=doc["noise_std"],
                regime=doc.get("regime"),
                t_max=doc["t_max"],
                profile=doc.get("profile", "custom"),
                design_reward=RewardParams(**doc["design_reward"]) if "design_reward" in doc else None,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed landscape document: {exc}") from None


def synth_evaluate(model: LandscapeModel, config, batch_size, rng):
    index = model.space.index_of(config)
    mu = model.mean_accuracy[index]
    acc = np.clip(mu + model.noise_std * rng.standard_normal(batch_size), 0.0, 1.0)
    tokens = int(model.mean_tokens[index])
    return [QueryOutcome(float(a), tokens) for a in acc]


def _is_ordinal(dimension):
    return all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in dimension.levels)


def token_fraction(space: HyperParamSpace) -> np.ndarray:
    """Token share of t_max per config; grows with top-k and with the kept-token ratio."""
    names = space.names
    ordinal = [i for i, d in enumerate(space.dimensions) if _is_ordinal(d)]
    k_dim = names.index("top_k") if "top_k" in names else (ordinal[0] if ordinal else None)
    c_dim = names.index("compression") if "compression" in names else next(
        (i for i in ordinal if i != k_dim), None)
    frac = np.empty(space.cardinality)
    for idx, config in enumerate(space.configs()):
        uk = config[k_dim] / (space.shape[k_dim] - 1) if k_dim is not None else 1.0
        uc = config[c_dim] / (space.shape[c_dim] - 1) if c_dim is not None else 1.0
        frac[idx] = TOKEN_BASE + TOKEN_SPAN * uk * (TOKEN_FLOOR + (1 - TOKEN_FLOOR) * uc)
    return frac


def _affinity_order(space, rng):
    """Configs ordered by closeness to a random optimum (unimodal under single moves)."""
    optimum = tuple(int(rng.integers(n)) for n in space.shape)
    weights = rng.uniform(1.0, 2.0, size=space.n_dims)
    ordinal = [_is_ordinal(d) for d in space.dimensions]
    configs = space.configs()
    dist = np.array([
        sum(wt * (abs(c - o) if ordl else float(c != o))
            for c, o, wt, ordl in zip(cfg, optimum, weights, ordinal))
        for cfg in configs
    ])
    dist += rng.uniform(0.0, 0.5, size=len(configs))
    dist[space.index_of(optimum)] = -1.0
    return np.argsort(dist, kind="stable")


# Target reward offsets (in noise units) below the optimum.
# head: the leading ranks; gap: drop after the head; near: ranks after the
# head that decline slowly; slope / near_slope: per-rank decline in the tail.
_PROFILES = {
    EASY: dict(head=(0.0, -3.2, -3.6, -4.0, -4.4), gap=1.2, near=6, near_slope=0.2, slope=0.6),
    MEDIUM: dict(head=(0.0, -0.35, -0.7, -1.05, -1.4), gap=0.7, near=8, near_slope=0.15, slope=1.0),
    HARD: dict(head=None, gap=2.0, near=0, near_slope=0.0, slope=0.5),
}


def _head_offsets(regime, n, rng):
    if regime == HARD:
        plateau = max(int(math.ceil(0.4 * n)), 1)
        return np.concatenate([[0.0], -np.sort(rng.uniform(0.0, HARD_PLATEAU_SPREAD, size=plateau - 1))])
    return np.array(_PROFILES[regime]["head"][:n])


def _place_targets(regime, order, lo, hi, unit, rng):
    """Target expected reward per config, or None when the windows cannot fit the profile."""
    n = len(order)
    prof = _PROFILES[regime]
    head = _head_offsets(regime, n, rng)
    h = len(head)
    top = min(hi[order[:h]])
    values = top + unit * head
    if np.any(values < lo[order[:h]]):
        return None
    targets = np.empty(n)
    targets[order[:h]] = values
    level = values[-1] - prof["gap"] * unit
    for rank in range(h, n):
        c = order[rank]
        value = min(max(level, lo[c]), hi[c])
        if value > values[-1] - prof["gap"] * unit + 1e-12:
            return None
        targets[c] = value
        level -= unit * (prof["near_slope"] if rank - h < prof["near"] else prof["slope"])
    return targets


def _is_unimodal(space, values):
    best = int(np.argmax(values))
    for idx, config in enumerate(space.configs()):
        if idx == best:
            continue
        better = False
        for d, size in enumerate(space.shape):
            for lv in range(size):
                if lv != config[d]:
                    nb = list(config)
                    nb[d] = lv
                    if values[space.index_of(nb)] > values[idx]:
                        better = True
                        break
            if better:
                break
        if not better:
            return False
    return True


def regime_report(model: LandscapeModel, params: RewardParams | None = None) -> dict:
    """Measure the gap statistics that define the regimes, in noise units."""
    values = model.expected_rewards(params)
    unit = model.noise_scale()
    ranked = np.sort(values)[::-1]
    n = len(values)
    plateau = max(int(math.ceil(0.4 * n)), 1)
    return {
        "unit": unit,
        "n_max": int(np.sum(values == ranked[0])),
        "top_gap": float((ranked[0] - ranked[1]) / unit) if n > 1 else math.inf,
        "top5_span": float((ranked[0] - ranked[min(4, n - 1)]) / unit),
        "gap_after_5": float((ranked[4] - ranked[5]) / unit) if n > 5 else math.inf,
        "within_one_unit": int(np.sum(values >= ranked[0] - unit)),
        "plateau_size": plateau,
        "unimodal": _is_unimodal(model.space, values),
    }


def regime_holds(model: LandscapeModel, regime=None) -> bool:
    regime = regime or model.regime
    r = regime_report(model)
    if regime == EASY:
        return r["n_max"] == 1 and r["top_gap"] >= 3.0 and r["unimodal"]
    if regime == MEDIUM:
        return r["top5_span"] <= 1.5 and r["gap_after_5"] >= MEDIUM_MIN_GAP
    if regime == HARD:
        return r["within_one_unit"] >= r["plateau_size"]
    raise ConfigError(f"unknown regime {regime!r}")


def gen_landscape(regime, space: HyperParamSpace, seed=None, reward: RewardParams | None = None,
                  noise_std=DEFAULT_NOISE_STD, profile="asqa-like", max_attempts=200) -> LandscapeModel:
    """Generate a landscape of the given difficulty regime.

    The gap conditions hold for the exact expected reward under ``reward``
    (default: w=0.5 with the profile's t_max). Optima whose token cost leaves
    no room for the regime's profile are redrawn.
    """
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    t_max = PROFILES[profile]
    reward = reward or RewardParams(w=0.5, t_max=t_max)
    if reward.w == 0:
        raise ConfigError("landscapes need w > 0 so accuracy influences the reward")
    noise_std = check_nonnegative_real(noise_std, "noise_std")
    rng = np.random.default_rng(check_seed_sequence(seed))
    unit = reward.w * (noise_std or DEFAULT_NOISE_STD) / math.sqrt(REFERENCE_BATCH)

    tokens = np.rint(token_fraction(space) * min(t_max, reward.t_max)).astype(np.int64)
    cost = (1 - reward.w) * tokens / reward.t_max
    thr = reward.penalty_threshold
    acc_lo = float(expected_penalized_accuracy(0.0, noise_std, thr))
    acc_hi = float(expected_penalized_accuracy(_PROFILES[regime].get("acc_cap", 1.0), noise_std, thr))
    margin = 1e-3 * reward.w * (acc_hi - acc_lo)
    lo = reward.w * acc_lo - cost + margin
    hi = reward.w * acc_hi - cost - margin

    for _ in range(max_attempts):
        order = _affinity_order(space, rng)
        targets = _place_targets(regime, order, lo, hi, unit, rng)
        if targets is None:
            continue
        accuracy = _solve_accuracy((targets + cost) / reward.w, noise_std, thr)
        model = LandscapeModel(space, accuracy, tokens, noise_std=noise_std, regime=regime, t_max=t_max,
                               profile=profile, design_reward=reward)
        if regime_holds(model):
            return model
    raise ConfigError(f"could not fit a {regime} landscape to this space and reward setting")


def gen_landscape_pair(regime, space: HyperParamSpace, seed=None, lift=0.05, jitter=0.25,
                       max_attempts=200, **kwargs):
    """Two correlated landscapes, as before and after a base-model upgrade.

    The second keeps the first one's token surface and shifts its accuracy
    surface by ``lift`` plus Gaussian jitter of ``jitter`` noise units. Draws
    are repeated until the second landscape's optimum lies inside the first
    one's top five.
    """
    seq = check_seed_sequence(seed)
    first_seq, second_seq = seq.spawn(2)
    first = gen_landscape(regime, space, seed=first_seq, **kwargs)
    first.name = f"landscape:{regime}:phase1"
    rng = np.random.default_rng(second_seq)
    reward = first.design_reward
    top5 = set(np.argsort(-first.expected_rewards(), kind="stable")[:5].tolist())
    scale = jitter * first.noise_scale() / reward.w
    for _ in range(max_attempts):
        accuracy = np.clip(first.mean_accuracy + lift + scale * rng.standard_normal(space.cardinality), 0.0, 1.0)
        second = LandscapeModel(space, accuracy, first.mean_tokens, noise_std=first.noise_std, regime=regime,
                                t_max=first.t_max, profile=first.profile, design_reward=reward,
                                name=f"landscape:{regime}:phase2")
        values = second.expected_rewards()
        if int(np.argmax(values)) in top5:
            return first, second
    raise ConfigError("could not draw a second phase whose optimum stays in the first phase's top five")
