"""Client for a live evaluation pipeline reachable over HTTP/JSON.

Request body: ``{"config": {dimension: level, ...}, "batch_size": B}``.
Response body: ``{"outcomes": [{"accuracy": a, "tokens": t}, ...]}``.
"""
from __future__ import annotations

import json
import logging
import threading

import httpx

from ..exceptions import ConfigError, RemoteSchemaError, RemoteTransportError
from ..reward import QueryOutcome
from .base import Environment

logger = logging.getLogger(__name__)


def _excerpt(payload, limit=200):
    text = payload if isinstance(payload, str) else json.dumps(payload, default=str)
    return text if len(text) <= limit else text[:limit] + "..."


def parse_outcomes(payload, batch_size=None, t_max=None):
    """Validate a response payload and return its outcomes."""
    if not isinstance(payload, dict) or not isinstance(payload.get("outcomes"), list):
        raise RemoteSchemaError(f"response lacks an 'outcomes' list: {_excerpt(payload)}")
    outcomes = []
    for i, item in enumerate(payload["outcomes"]):
        try:
            outcome = QueryOutcome(item["accuracy"], item["tokens"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteSchemaError(f"outcome {i} invalid ({exc}): {_excerpt(item)}") from None
        if t_max is not None and outcome.tokens > t_max:
            logger.warning("remote outcome %d reports %d tokens > t_max=%d", i, outcome.tokens, t_max)
        outcomes.append(outcome)
    if batch_size is not None and len(outcomes) != batch_size:
        raise RemoteSchemaError(f"expected {batch_size} outcomes, got {len(outcomes)}: {_excerpt(payload)}")
    return outcomes


class RemoteEnvironment(Environment):
    """Evaluates configurations by POSTing them to ``url``.

    Transport failures (connection errors, timeouts, 5xx) are retried up to
    ``max_retries`` times; schema violations fail immediately.
    """

    def __init__(self, url, space, t_max=1585, timeout=30.0, max_retries=2, client=None, name="remote"):
        if max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        self.url = url
        self.space = space
        self.t_max = int(t_max)
        self.timeout = timeout
        self.max_retries = max_retries
        self.name = name
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()

    def evaluate(self, config, batch_size, rng=None):
        return remote_evaluate(self, config, batch_size)

    def close(self):
        self._client.close()


def remote_evaluate(env: RemoteEnvironment, config, batch_size):
    body = {"config": env.space.named(config), "batch_size": int(batch_size)}
    last_error = None
    with env._lock:  # one request at a time per connection
        for attempt in range(env.max_retries + 1):
            try:
                response = env._client.post(env.url, json=body)
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("remote evaluation attempt %d failed: %s", attempt + 1, exc)
                continue
            if response.status_code >= 500:
                last_error = RuntimeError(f"HTTP {response.status_code}")
                logger.warning("remote evaluation attempt %d got HTTP %d", attempt + 1, response.status_code)
                continue
            if response.status_code != 200:
                raise RemoteSchemaError(f"HTTP {response.status_code}: {_excerpt(response.text)}")
            try:
                payload = response.json()
            except ValueError:
                raise RemoteSchemaError(f"response is not JSON: {_excerpt(response.text)}") from None
            return parse_outcomes(payload, batch_size, env.t_max)
    raise RemoteTransportError(f"remote evaluation failed after {env.max_retries + 1} attempts: {last_error}")
