import json

import httpx
import pytest

from ragbandit.environment import RemoteEnvironment, parse_outcomes
from ragbandit.exceptions import RemoteSchemaError, RemoteTransportError


def make_env(space, handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteEnvironment("http://pipeline/evaluate", space, client=client, **kw)


def echo(request):
    n = json.loads(request.content)["batch_size"]
    return httpx.Response(200, json={"outcomes": [{"accuracy": 0.5, "tokens": 100}] * n})


def test_pass_through(space3):
    seen = []

    def handler(request):
        seen.append(request)
        return echo(request)

    env = make_env(space3, handler)
    outs = env.evaluate((0, 1, 2), 4)
    assert [(o.accuracy, o.tokens) for o in outs] == [(0.5, 100)] * 4
    assert json.loads(seen[0].content)["config"] == {"top_k": 1, "compression": 0.5, "embedding": "contriever"}


def test_schema_violation_is_fatal(space3):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(200, json={"outcomes": [{"accuracy": 1.5, "tokens": 3}]})

    with pytest.raises(RemoteSchemaError) as info:
        make_env(space3, handler).evaluate((0, 0, 0), 1)
    assert "1.5" in str(info.value)
    assert len(calls) == 1 and not info.value.retryable


def test_timeout_then_success(space3):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ReadTimeout("slow", request=request)
        return echo(request)

    outs = make_env(space3, handler).evaluate((0, 0, 0), 2)
    assert len(outs) == 2 and len(calls) == 2


def test_server_errors_exhaust_retries(space3):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    with pytest.raises(RemoteTransportError) as info:
        make_env(space3, handler, max_retries=2).evaluate((0, 0, 0), 1)
    assert len(calls) == 3 and info.value.retryable


@pytest.mark.parametrize("response", [
    httpx.Response(200, text="not json"),
    httpx.Response(400, text="bad request"),
    httpx.Response(200, json={"outcomes": [{"accuracy": 0.5, "tokens": 1}] * 3}),
    httpx.Response(200, json={"results": []}),
])
def test_bad_responses(space3, response):
    with pytest.raises(RemoteSchemaError):
        make_env(space3, lambda r: response).evaluate((0, 0, 0), 4)


def test_parse_outcomes_messages():
    with pytest.raises(RemoteSchemaError, match="outcome 0"):
        parse_outcomes({"outcomes": [{"accuracy": 0.5}]})
    assert parse_outcomes({"outcomes": [{"accuracy": 1, "tokens": 5}]})[0].tokens == 5
