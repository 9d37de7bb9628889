"""HTTP service exposing the environment as a stateful tool.

Sessions host one construction episode each; a step is exactly the
in-process transition, so driving the service and replaying locally
produce identical graphs. Sessions expire after an idle TTL.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .episode import Episode
from .errors import GraphwrightError, MalformedRegistry, MalformedWorkflow, UnknownOperator
from .graph import final_check, graph_from_dict, graph_to_dict
from .registry import registry_to_dict, resolve_registry
from .reward import final_reward

DEFAULT_TTL_SECONDS = 3600.0


@dataclass
class Session:
    session_id: str
    query: str
    schema_id: str
    episode: Episode
    created_at: float
    last_access: float
    step_count: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def terminated(self) -> bool:
        return self.episode.terminated


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS, clock=time.monotonic):
        self.ttl = ttl_seconds
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, query: str, schema_id: str, episode: Episode) -> Session:
        now = self.clock()
        session = Session(
            session_id=uuid.uuid4().hex,
            query=query,
            schema_id=schema_id,
            episode=episode,
            created_at=now,
            last_access=now,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                return None
            if self.clock() - session.last_access > self.ttl:
                del self._sessions[session_id]
                return None
            session.last_access = self.clock()
            return session

    def delete(self, session_id: str) -> bool:
        with self._lock:
            return self._sessions.pop(session_id, None) is not None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


async def _body(request: Request) -> dict | JSONResponse:
    try:
        doc = await request.json()
    except Exception:
        return _error(400, "malformed_body", "request body must be JSON")
    if not isinstance(doc, dict):
        return _error(400, "malformed_body", "request body must be a JSON object")
    return doc


def create_app(ttl_seconds: float = DEFAULT_TTL_SECONDS, clock=time.monotonic) -> FastAPI:
    app = FastAPI(title="graphwright", docs_url=None, redoc_url=None)
    store = SessionStore(ttl_seconds=ttl_seconds, clock=clock)
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request, exc):
        return _error(400, "malformed_body", str(exc))

    def _registry_for(schema_id):
        if not isinstance(schema_id, str) or not schema_id:
            return None
        try:
            return resolve_registry(schema_id)
        except MalformedRegistry:
            return None

    @app.post("/v1/sessions")
    async def create_session(request: Request):
        doc = await _body(request)
        if isinstance(doc, JSONResponse):
            return doc
        query, schema_id = doc.get("query"), doc.get("schema_id")
        if not isinstance(query, str) or not isinstance(schema_id, str):
            return _error(400, "malformed_body", "need string fields query and schema_id")
        registry = _registry_for(schema_id)
        if registry is None:
            return _error(400, "unknown_schema", f"no schema named {schema_id!r}")
        session = store.create(query, schema_id, Episode.start(registry))
        return {"session_id": session.session_id}

    @app.post("/v1/sessions/{session_id}/step")
    async def step(session_id: str, request: Request):
        doc = await _body(request)
        if isinstance(doc, JSONResponse):
            return doc
        line = doc.get("action_text")
        if not isinstance(line, str):
            return _error(400, "malformed_body", "need string field action_text")
        session = store.get(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            if session.terminated:
                return _error(409, "session_terminated",
                              "session already accepted STOP")
            episode, outcome = session.episode.step(line)
            session.episode = episode
            step_index = session.step_count
            session.step_count += 1
            return {
                "accepted": outcome.accepted,
                "diagnostics": [d.to_dict() for d in outcome.diagnostics],
                "graph_digest": episode.graph_digest,
                "step_index": step_index,
                "terminated": episode.terminated,
            }

    @app.get("/v1/sessions/{session_id}/graph")
    async def get_graph(session_id: str):
        session = store.get(session_id)
        if session is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            return graph_to_dict(session.episode.graph, session.schema_id)

    @app.delete("/v1/sessions/{session_id}")
    async def delete_session(session_id: str):
        if not store.delete(session_id):
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return {"deleted": True}

    @app.post("/v1/validate")
    async def validate(request: Request):
        doc = await _body(request)
        if isinstance(doc, JSONResponse):
            return doc
        workflow = doc.get("workflow")
        if not isinstance(workflow, dict):
            return _error(400, "malformed_body", "need object field workflow")
        registry = _registry_for(workflow.get("schema_id"))
        if registry is None:
            return _error(400, "unknown_schema", "workflow.schema_id does not resolve")
        try:
            graph = graph_from_dict(workflow, registry)
        except (MalformedWorkflow, UnknownOperator) as exc:
            return _error(400, "malformed_workflow", str(exc))
        outcome = final_check(graph, registry)
        return {
            "executable": outcome.accepted,
            "diagnostics": [d.to_dict() for d in outcome.diagnostics],
        }

    @app.post("/v1/reward")
    async def reward(request: Request):
        doc = await _body(request)
        if isinstance(doc, JSONResponse):
            return doc
        trace, target = doc.get("trace"), doc.get("target")
        if not isinstance(trace, str) or not isinstance(target, dict):
            return _error(400, "malformed_body",
                          "need string field trace and object field target")
        registry = _registry_for(target.get("schema_id"))
        if registry is None:
            return _error(400, "unknown_schema", "target.schema_id does not resolve")
        try:
            g_star = graph_from_dict(target, registry)
        except (MalformedWorkflow, UnknownOperator) as exc:
            return _error(400, "malformed_workflow", str(exc))
        try:
            breakdown = final_reward(trace, g_star, registry)
        except GraphwrightError as exc:
            return _error(400, "bad_target", str(exc))
        return breakdown.to_dict()

    @app.get("/v1/schemas/{schema_id}")
    async def get_schema(schema_id: str):
        registry = _registry_for(schema_id)
        if registry is None:
            return _error(404, "unknown_schema", f"no schema named {schema_id!r}")
        return registry_to_dict(registry)

    return app
