"""In-memory suggest/report sessions.

Each session wraps one tuner. ``suggest`` runs a selection step and parks the
proposal as pending; ``report`` consumes exactly one pending proposal and
applies exactly one learner update. Requests for one session are serialized
by a per-session lock; different sessions proceed independently.
"""
from __future__ import annotations

import base64
import binascii
import hashlib
import json
import math
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..estimators import Suggestion, canonical_method, make_tuner
from ..exceptions import ConfigError
from ..reward import QueryOutcome, RewardParams, batch_reward
from ..space import HyperParamSpace, default_space

SNAPSHOT_FORMAT = 1
DEFAULT_EXPIRY = 3600.0  # seconds a suggestion may stay pending
TUNER_PARAMS = ("alpha", "alpha_high", "alpha_low", "update_scope", "obs_variance", "initial_config")


class ServiceError(Exception):
    code = "internal"
    status = 500

    def __init__(self, message, fields=None):
        super().__init__(message)
        self.message = message
        self.fields = fields or []

    def to_dict(self):
        doc = {"code": self.code, "message": self.message}
        if self.fields:
            doc["fields"] = self.fields
        return doc


class NotFound(ServiceError):
    code, status = "not_found", 404


class Conflict(ServiceError):
    code, status = "conflict", 409


class Invalid(ServiceError):
    code, status = "validation", 422


@dataclass
class Pending:
    suggestion: Suggestion
    issued_at: float


@dataclass
class Session:
    session_id: str
    method: str
    space: HyperParamSpace
    reward: RewardParams
    params: dict
    seed: int
    tuner: object
    strict_sequential: bool = False
    batch_size: int | None = None
    pending: OrderedDict = field(default_factory=OrderedDict)
    n_suggests: int = 0
    n_accepted: int = 0
    n_expired: int = 0
    n_updates: int = 0
    created_at: float = 0.0
    updated_at: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def _space_from(doc):
    if doc is None:
        return default_space(3)
    if isinstance(doc, str):
        if doc in ("default-2", "default-3"):
            return default_space(int(doc[-1]))
        raise Invalid("unknown space preset", [{"field": "space", "message": f"unknown preset {doc!r}"}])
    if not isinstance(doc, dict) or not doc:
        raise Invalid("space must map dimension names to level lists",
                      [{"field": "space", "message": "expected a non-empty mapping"}])
    problems = []
    for name, levels in doc.items():
        if not isinstance(levels, list):
            problems.append({"field": f"space.{name}", "message": "levels must be a list"})
    if problems:
        raise Invalid("invalid space", problems)
    try:
        return HyperParamSpace.from_dict(doc)
    except (ConfigError, TypeError, ValueError) as exc:
        raise Invalid("invalid space", [{"field": "space", "message": str(exc)}]) from None


def _checksum(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


class SessionManager:
    """Owns every live session. ``clock`` returns seconds and can be swapped in tests."""

    def __init__(self, expiry=DEFAULT_EXPIRY, clock=time.monotonic, id_factory=None):
        if expiry <= 0:
            raise ValueError("expiry must be positive")
        self.expiry = float(expiry)
        self.clock = clock
        self._new_id = id_factory or (lambda: uuid.uuid4().hex)
        self._sessions = {}
        self._lock = threading.Lock()

    # -- lookup -------------------------------------------------------------

    def _get(self, session_id) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise NotFound(f"no session {session_id!r}")
        return session

    def _register(self, session: Session):
        with self._lock:
            while session.session_id in self._sessions:
                session.session_id = self._new_id()
            self._sessions[session.session_id] = session
        return session.session_id

    def session_ids(self):
        with self._lock:
            return sorted(self._sessions)

    def _expire(self, session: Session):
        now = self.clock()
        stale = [sid for sid, p in session.pending.items() if now - p.issued_at > self.expiry]
        for sid in stale:
            del session.pending[sid]
        session.n_expired += len(stale)

    # -- operations ---------------------------------------------------------

    def create_session(self, space=None, method="hier-ucb", reward=None, params=None, seed=None,
                       strict_sequential=False, batch_size=None) -> str:
        problems = []
        space = _space_from(space)
        try:
            method = canonical_method(method)
        except ConfigError as exc:
            problems.append({"field": "method", "message": str(exc)})
        try:
            reward = RewardParams(**(reward or {}))
        except (ConfigError, TypeError) as exc:
            problems.append({"field": "reward", "message": str(exc)})
        params = dict(params or {})
        for key in params:
            if key not in TUNER_PARAMS:
                problems.append({"field": f"params.{key}", "message": "unknown tuner parameter"})
        if batch_size is not None and (isinstance(batch_size, bool) or not isinstance(batch_size, int)
                                       or batch_size < 1):
            problems.append({"field": "batch_size", "message": "must be a positive integer"})
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            problems.append({"field": "seed", "message": "must be a non-negative integer"})
        if problems:
            raise Invalid("invalid session request", problems)
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1)[0])
        if "initial_config" in params and isinstance(params["initial_config"], list):
            params["initial_config"] = tuple(params["initial_config"])
        tuner = self._build_tuner(method, space, params, seed)
        now = self.clock()
        session = Session(self._new_id(), method, space, reward, params, seed, tuner,
                          strict_sequential=bool(strict_sequential), batch_size=batch_size,
                          created_at=now, updated_at=now)
        return self._register(session)

    @staticmethod
    def _build_tuner(method, space, params, seed):
        try:
            tuner = make_tuner(method, space, random_state=seed, **params)
            tuner.initialize()
        except (ConfigError, TypeError, ValueError) as exc:
            raise Invalid("invalid tuner parameters", [{"field": "params", "message": str(exc)}]) from None
        return tuner

    def describe(self, session_id) -> dict:
        session = self._get(session_id)
        with session.lock:
            self._expire(session)
            return self._describe(session)

    @staticmethod
    def _describe(session):
        return {
            "session_id": session.session_id,
            "method": session.method,
            "space": session.space.to_dict(),
            "cardinality": session.space.cardinality,
            "trials": session.tuner.n_trials_,
            "pending": len(session.pending),
            "suggests": session.n_suggests,
            "accepted_reports": session.n_accepted,
            "expired": session.n_expired,
            "updates": session.n_updates,
            "strict_sequential": session.strict_sequential,
        }

    def suggest(self, session_id) -> dict:
        session = self._get(session_id)
        with session.lock:
            self._expire(session)
            if session.strict_sequential and session.pending:
                raise Conflict("this session is strictly sequential and a suggestion is still pending")
            suggestion = session.tuner.suggest()
            suggestion_id = f"sg-{session.n_suggests:08d}"
            session.n_suggests += 1
            session.pending[suggestion_id] = Pending(suggestion, self.clock())
            session.updated_at = self.clock()
            return {"suggestion_id": suggestion_id, "config": session.space.named(suggestion.config)}

    @staticmethod
    def _parse_outcomes(session, outcomes):
        if not isinstance(outcomes, list) or not outcomes:
            raise Invalid("outcomes must be a non-empty list", [{"field": "outcomes", "message": "empty or not a list"}])
        if session.batch_size is not None and len(outcomes) != session.batch_size:
            raise Invalid(f"expected {session.batch_size} outcomes, got {len(outcomes)}",
                          [{"field": "outcomes", "message": "wrong batch size"}])
        parsed, problems = [], []
        for i, item in enumerate(outcomes):
            if not isinstance(item, dict):
                problems.append({"field": f"outcomes[{i}]", "message": "expected an object"})
                continue
            extra = set(item) - {"accuracy", "tokens"}
            if extra:
                problems.append({"field": f"outcomes[{i}]", "message": f"unknown keys {sorted(extra)}"})
                continue
            for key in ("accuracy", "tokens"):
                if key not in item:
                    problems.append({"field": f"outcomes[{i}].{key}", "message": "missing"})
            if "accuracy" not in item or "tokens" not in item:
                continue
            try:
                parsed.append(QueryOutcome(item["accuracy"], item["tokens"]))
            except (ConfigError, TypeError, ValueError) as exc:
                key = "accuracy" if "accuracy" in str(exc) else "tokens"
                problems.append({"field": f"outcomes[{i}].{key}", "message": str(exc)})
        if problems:
            raise Invalid("invalid outcomes", problems)
        return parsed

    def report(self, session_id, suggestion_id, outcomes) -> dict:
        session = self._get(session_id)
        with session.lock:
            self._expire(session)
            if suggestion_id not in session.pending:
                raise Conflict(f"suggestion {suggestion_id!r} is not pending (unknown, expired or already reported)")
            parsed = self._parse_outcomes(session, outcomes)
            value = batch_reward(parsed, session.reward)
            pending = session.pending.pop(suggestion_id)
            session.tuner.update(pending.suggestion, value)
            session.n_updates += 1
            session.n_accepted += 1
            session.updated_at = self.clock()
            return {"suggestion_id": suggestion_id, "accepted": True, "reward": value,
                    "trials": session.tuner.n_trials_}

    def ranking(self, session_id, x=5) -> dict:
        session = self._get(session_id)
        with session.lock:
            if isinstance(x, bool) or not isinstance(x, int) or not 1 <= x <= session.space.cardinality:
                raise Invalid(f"x must lie in [1, {session.space.cardinality}]",
                              [{"field": "x", "message": f"got {x!r}"}])
            ranking = session.tuner.rank(x)
            rows = []
            for pos, (idx, score) in enumerate(ranking.entries[:x], start=1):
                score = float(score)
                rows.append({"rank": pos, "config": session.space.named(session.space.config_at(idx)),
                             "score": score if math.isfinite(score) else None})
            return {"x": x, "trials": session.tuner.n_trials_, "ranking": rows}

    def reset_session(self, session_id) -> dict:
        session = self._get(session_id)
        with session.lock:
            session.tuner.reset()
            session.updated_at = self.clock()
            return {"reset": True, "trials": session.tuner.n_trials_}

    def snapshot(self, session_id) -> str:
        session = self._get(session_id)
        with session.lock:
            self._expire(session)
            now = self.clock()
            doc = {
                "method": session.method,
                "space": [[d.name, list(d.levels)] for d in session.space.dimensions],
                "reward": {"w": session.reward.w, "t_max": session.reward.t_max,
                           "penalty_threshold": session.reward.penalty_threshold},
                "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in session.params.items()},
                "seed": session.seed,
                "strict_sequential": session.strict_sequential,
                "batch_size": session.batch_size,
                "counters": [session.n_suggests, session.n_accepted, session.n_expired, session.n_updates],
                "pending": [
                    [sid, p.suggestion.config_index, list(p.suggestion.config), p.suggestion.dimension,
                     p.suggestion.level, now - p.issued_at]
                    for sid, p in session.pending.items()
                ],
                "tuner": session.tuner.get_state(),
            }
        payload = _canonical(doc)
        envelope = {"format": SNAPSHOT_FORMAT, "checksum": _checksum(payload), "session": doc}
        return base64.b64encode(_canonical(envelope)).decode("ascii")

    def restore(self, blob) -> str:
        doc = self._open_blob(blob)
        try:
            space = HyperParamSpace.from_dict({name: levels for name, levels in doc["space"]})
            params = dict(doc["params"])
            if isinstance(params.get("initial_config"), list):
                params["initial_config"] = tuple(params["initial_config"])
            tuner = self._build_tuner(doc["method"], space, params, doc["seed"])
            tuner.set_state(doc["tuner"])
            now = self.clock()
            session = Session(self._new_id(), doc["method"], space, RewardParams(**doc["reward"]), params,
                              doc["seed"], tuner, strict_sequential=doc["strict_sequential"],
                              batch_size=doc["batch_size"], created_at=now, updated_at=now)
            session.n_suggests, session.n_accepted, session.n_expired, session.n_updates = doc["counters"]
            for sid, idx, config, dim, level, age in doc["pending"]:
                suggestion = Suggestion(idx, space.check_config(config), dim, level)
                session.pending[sid] = Pending(suggestion, now - age)
        except Invalid:
            raise
        except (ConfigError, KeyError, TypeError, ValueError) as exc:
            raise Invalid(f"snapshot is inconsistent: {exc}", [{"field": "blob", "message": str(exc)}]) from None
        return self._register(session)

    @staticmethod
    def _open_blob(blob):
        def bad(msg):
            return Invalid(f"corrupt snapshot: {msg}", [{"field": "blob", "message": msg}])

        if not isinstance(blob, str):
            raise bad("expected a string")
        try:
            envelope = json.loads(base64.b64decode(blob.encode("ascii"), validate=True))
        except (binascii.Error, UnicodeError, ValueError):
            raise bad("not a base64-encoded JSON document") from None
        if not isinstance(envelope, dict) or envelope.get("format") != SNAPSHOT_FORMAT:
            raise bad("unknown snapshot format")
        doc = envelope.get("session")
        if not isinstance(doc, dict) or envelope.get("checksum") != _checksum(_canonical(doc)):
            raise bad("checksum mismatch")
        return doc
