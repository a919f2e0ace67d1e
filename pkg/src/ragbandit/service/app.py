"""HTTP/JSON front end for ``SessionManager``."""
from __future__ import annotations

import logging
from typing import Any, Optional, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from .manager import ServiceError, SessionManager

logger = logging.getLogger(__name__)


class CreateBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    space: Optional[Union[str, dict[str, Any]]] = None
    method: str = "hier-ucb"
    reward: Optional[dict[str, Any]] = None
    params: Optional[dict[str, Any]] = None
    seed: Optional[int] = None
    strict_sequential: bool = False
    batch_size: Optional[int] = None


class ReportBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    suggestion_id: str
    outcomes: Any


class RestoreBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    blob: str


def _error(status, code, message, fields=None):
    body = {"error": {"code": code, "message": message}}
    if fields:
        body["error"]["fields"] = fields
    return JSONResponse(status_code=status, content=body)


def create_app(manager: SessionManager | None = None) -> FastAPI:
    manager = manager or SessionManager()
    app = FastAPI(title="ragbandit tuner service")
    app.state.manager = manager

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return _error(exc.status, exc.code, exc.message, exc.fields)

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        fields = [{"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
                  for e in exc.errors()]
        return _error(422, "validation", "malformed request", fields)

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        logger.exception("unhandled error on %s", request.url.path)
        return _error(500, "internal", "internal error")

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateBody):
        sid = manager.create_session(body.space, body.method, body.reward, body.params, body.seed,
                                     body.strict_sequential, body.batch_size)
        return manager.describe(sid)

    @app.post("/sessions/restore", status_code=201)
    def restore(body: RestoreBody):
        return {"session_id": manager.restore(body.blob)}

    @app.get("/sessions/{session_id}")
    def describe(session_id: str):
        return manager.describe(session_id)

    @app.post("/sessions/{session_id}/suggest")
    def suggest(session_id: str):
        return manager.suggest(session_id)

    @app.post("/sessions/{session_id}/report")
    def report(session_id: str, body: ReportBody):
        return manager.report(session_id, body.suggestion_id, body.outcomes)

    @app.get("/sessions/{session_id}/ranking")
    def ranking(session_id: str, x: int = 5):
        return manager.ranking(session_id, x)

    @app.post("/sessions/{session_id}/snapshot")
    def snapshot(session_id: str):
        return {"blob": manager.snapshot(session_id)}

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        return manager.reset_session(session_id)

    return app
