"""HTTP + server-sent-events API over the session service.

Endpoints:

    POST   /sessions                     -> 201 {"session_id": ...}
    GET    /sessions/{id}                -> session summary with its rounds
    POST   /sessions/{id}/messages       -> runs a round, returns the final post
    GET    /sessions/{id}/events         -> SSE stream of service events
    DELETE /sessions/{id}                -> reset (worker stopped, rounds cleared)
    GET    /plugins                      -> loaded plugin schemas
    GET    /artifacts/{sid}/{name}       -> artifact bytes

The event stream honors ``Last-Event-ID`` (each event's id is its index in
the session event log), so a reconnecting client resumes where it left
off. An optional static bearer token is enforced when the
``CODELOOP_API_TOKEN`` environment variable is set.
"""

from __future__ import annotations

import os
from typing import Iterator

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from pydantic import BaseModel

from .memory.store import UnknownSession
from .service import AgentService, RoundFailedError, post_to_dict

SSE_POLL_SECONDS = 0.5


class MessageIn(BaseModel):
    message: str


def create_app(service: AgentService) -> FastAPI:
    app = FastAPI(title="codeloop", version="0.1.0")
    app.state.service = service

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = os.environ.get("CODELOOP_API_TOKEN")
        if token:
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse({"detail": "unauthorized"}, status_code=401)
        return await call_next(request)

    def _session(session_id: str):
        try:
            return service.store.get(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id}")

    @app.post("/sessions", status_code=201)
    def create_session(body: dict | None = None):
        plugin_set = (body or {}).get("plugins")
        session = service.create_session(plugin_set)
        return {"session_id": session.id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = _session(session_id)
        return {
            "session_id": session.id,
            "plugin_set": session.plugin_set,
            "rounds": [
                {
                    "id": rnd.id,
                    "user_query": rnd.user_query,
                    "state": rnd.state.value,
                    "posts": [post_to_dict(p) for p in rnd.posts],
                }
                for rnd in session.rounds
            ],
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageIn):
        _session(session_id)
        try:
            final = service.run_round(session_id, body.message)
        except RoundFailedError as exc:
            return {"status": "failed", "reason": str(exc)}
        return {"status": "finished", "post": post_to_dict(final)}

    @app.delete("/sessions/{session_id}")
    def reset_session(session_id: str):
        _session(session_id)
        service.reset_session(session_id)
        return {"session_id": session_id, "reset": True}

    @app.get("/plugins")
    def list_plugins():
        return {
            "plugins": [
                {
                    "name": s.name,
                    "description": s.description,
                    "parameters": [
                        {"name": p.name, "type": p.type, "required": p.required}
                        for p in s.parameters
                    ],
                }
                for s in service.registry.schemas()
            ]
        }

    @app.get("/artifacts/{session_id}/{name:path}")
    def get_artifact(session_id: str, name: str):
        try:
            path = service.artifact_path(session_id, name)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown artifact: {name}")
        return FileResponse(path)

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, request: Request) -> Response:
        _session(session_id)
        start = 0
        last_id = request.headers.get("last-event-id")
        if last_id and last_id.isdigit():
            start = int(last_id) + 1

        def generate() -> Iterator[str]:
            index = start
            log = service.event_log(session_id)
            while True:
                events = log.read_from(index, timeout=SSE_POLL_SECONDS)
                if not events:
                    yield ": keep-alive\n\n"
                    continue
                for event in events:
                    yield f"id: {index}\ndata: {event.to_json()}\n\n"
                    index += 1

        return StreamingResponse(generate(), media_type="text/event-stream")

    return app
