"""Replay tables: precomputed (config, query) -> (accuracy, tokens) records.

On disk a table is a CSV file with header ``config_id,query_id,accuracy,tokens``
plus a JSON manifest next to it (``<stem>.manifest.json``) holding the
dimensions, the profile and the mapping from config_id to named levels.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from ..exceptions import ConfigError, ReplayFormatError
from ..reward import QueryOutcome, compute_reward
from ..space import HyperParamSpace
from .base import Environment

logger = logging.getLogger(__name__)

HEADER = ["config_id", "query_id", "accuracy", "tokens"]


def manifest_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def default_config_id(index: int) -> str:
    return f"c{index:03d}"


class ReplayTable(Environment):
    """A total table of per-query outcomes for every configuration.

    ``accuracy`` and ``tokens`` are arrays of shape ``(n_configs, n_queries)``
    indexed by flat config index and query position (ascending query id).
    """

    exhaustive = True

    def __init__(self, space: HyperParamSpace, queries, accuracy, tokens, profile="asqa-like",
                 t_max=1585, config_ids=None):
        self.space = space
        self.queries = [int(q) for q in queries]
        if self.queries != sorted(set(self.queries)):
            raise ConfigError("query ids must be unique and ascending")
        self.accuracy = np.asarray(accuracy, dtype=float)
        self.tokens = np.asarray(tokens, dtype=np.int64)
        shape = (space.cardinality, len(self.queries))
        if self.accuracy.shape != shape or self.tokens.shape != shape:
            raise ConfigError(f"outcome arrays must have shape {shape}")
        if not len(self.queries):
            raise ConfigError("a replay table needs at least one query")
        self.profile = profile
        self.t_max = int(t_max)
        self.name = f"replay:{profile}"
        self.config_ids = list(config_ids) if config_ids is not None else [
            default_config_id(i) for i in range(space.cardinality)]

    def __len__(self):
        return self.accuracy.size

    @property
    def n_queries(self):
        return len(self.queries)

    def outcome(self, config_index, query_pos) -> QueryOutcome:
        return QueryOutcome(float(self.accuracy[config_index, query_pos]),
                            int(self.tokens[config_index, query_pos]))

    @property
    def records(self):
        """``{(config_index, query_id): QueryOutcome}`` view of the table."""
        return {(c, q): self.outcome(c, j)
                for c in range(self.space.cardinality) for j, q in enumerate(self.queries)}

    def evaluate(self, config, batch_size, rng):
        return replay_evaluate(self, config, batch_size, rng)

    def expected_rewards(self, params) -> np.ndarray:
        means = np.empty(self.space.cardinality)
        for c in range(self.space.cardinality):
            # plain left-to-right sum in ascending query id order
            total = 0.0
            for j in range(self.n_queries):
                total += compute_reward(self.outcome(c, j), params)
            means[c] = total / self.n_queries
        return means


def replay_evaluate(table: ReplayTable, config, batch_size, rng):
    """Recorded outcomes for ``batch_size`` distinct queries drawn uniformly."""
    index = table.space.index_of(config)
    if batch_size < 1 or batch_size > table.n_queries:
        raise ConfigError(f"batch_size {batch_size} must lie in [1, {table.n_queries}]")
    picks = rng.choice(table.n_queries, size=batch_size, replace=False)
    return [table.outcome(index, int(j)) for j in picks]


def write_replay(table: ReplayTable, path, manifest=None):
    """Write ``table`` as CSV + manifest; returns the two paths."""
    path = Path(path)
    manifest = Path(manifest) if manifest else manifest_path_for(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for c in range(table.space.cardinality):
            for j, q in enumerate(table.queries):
                writer.writerow([table.config_ids[c], q, repr(float(table.accuracy[c, j])),
                                 int(table.tokens[c, j])])
    doc = {
        "profile": table.profile,
        "t_max": table.t_max,
        "dimensions": table.space.to_dict(),
        "configs": {table.config_ids[c]: table.space.named(table.space.config_at(c))
                    for c in range(table.space.cardinality)},
    }
    manifest.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path, manifest


def _read_manifest(manifest: Path, problems: list):
    try:
        doc = json.loads(manifest.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ReplayFormatError(f"manifest {manifest} not found") from None
    except json.JSONDecodeError as exc:
        raise ReplayFormatError(f"manifest {manifest} is not valid JSON: {exc}") from None
    try:
        space = HyperParamSpace.from_dict(doc["dimensions"])
        profile = str(doc.get("profile", "custom"))
        t_max = int(doc["t_max"])
        configs = doc["configs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ReplayFormatError(f"manifest {manifest} is incomplete: {exc}") from None
    id_to_index = {}
    for config_id, named in configs.items():
        try:
            id_to_index[config_id] = space.index_of(space.from_named(named))
        except (ConfigError, TypeError) as exc:
            problems.append(f"manifest entry {config_id!r}: {exc}")
    covered = set(id_to_index.values())
    if len(covered) != len(id_to_index):
        problems.append("manifest maps several config_ids to the same configuration")
    for c in range(space.cardinality):
        if c not in covered:
            problems.append(f"manifest has no config_id for {space.named(space.config_at(c))}")
    return space, profile, t_max, id_to_index


def scan_replay(path, manifest=None):
    """Parse a replay file, collecting every problem instead of stopping at the first.

    Returns ``(table_or_None, problems, warnings)``.
    """
    path = Path(path)
    manifest = Path(manifest) if manifest else manifest_path_for(path)
    problems, warnings = [], []
    space, profile, t_max, id_to_index = _read_manifest(manifest, problems)
    rows = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ReplayFormatError(f"replay file {path} not found") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ReplayFormatError(f"line 1: header must be {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                problems.append(f"line {lineno}: expected 4 fields, got {len(row)}")
                continue
            config_id, query_id, acc_text, tok_text = row
            if config_id not in id_to_index:
                problems.append(f"line {lineno}: config_id {config_id!r} has no manifest entry")
                continue
            try:
                query = int(query_id)
                accuracy = float(acc_text)
                tokens = int(tok_text)
            except ValueError:
                problems.append(f"line {lineno}: unparsable row {row}")
                continue
            if not (math.isfinite(accuracy) and 0.0 <= accuracy <= 1.0):
                problems.append(f"line {lineno}: accuracy {accuracy} outside [0, 1]")
                continue
            if tokens < 0:
                problems.append(f"line {lineno}: negative token count {tokens}")
                continue
            if tokens > t_max:
                warnings.append(f"line {lineno}: tokens {tokens} exceed t_max={t_max} and will be clamped")
            key = (id_to_index[config_id], query)
            if key in rows:
                problems.append(f"line {lineno}: duplicate record for ({config_id}, {query})")
                continue
            rows[key] = (accuracy, tokens)

    queries = sorted({q for _, q in rows})
    index_to_id = {i: cid for cid, i in id_to_index.items()}
    for c in range(space.cardinality):
        for q in queries:
            if (c, q) not in rows:
                problems.append(f"missing record for config_id {index_to_id.get(c, c)!r}, query {q}")
    if not queries:
        problems.append("replay file has no records")
    if problems:
        return None, problems, warnings

    accuracy = np.empty((space.cardinality, len(queries)))
    tokens = np.empty((space.cardinality, len(queries)), dtype=np.int64)
    position = {q: j for j, q in enumerate(queries)}
    for (c, q), (a, t) in rows.items():
        j = position[q]
        accuracy[c, j] = a
        tokens[c, j] = t
    ids = [index_to_id[c] for c in range(space.cardinality)]
    table = ReplayTable(space, queries, accuracy, tokens, profile=profile, t_max=t_max, config_ids=ids)
    return table, problems, warnings


def load_replay(path, manifest=None) -> ReplayTable:
    table, problems, warnings = scan_replay(path, manifest)
    for w in warnings:
        logger.warning(w)
    if problems:
        shown = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise ReplayFormatError(f"invalid replay file {path}: {shown}{more}", problems)
    return table
