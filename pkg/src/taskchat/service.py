"""HTTP surface: a FastAPI app over one engine instance.

Endpoints:
  POST /sessions                     create a session
  POST /sessions/{id}/messages       send user text, returns the turn events
  GET  /sessions/{id}/events         server-sent event stream of turn events
  GET  /sessions/{id}/transcript     user-audience transcript (text/plain)
  GET  /sessions/{id}/snapshot       JSON session snapshot
  GET  /healthz

The event stream supports resumption: `after` query parameter or the
Last-Event-ID header skip already-delivered sequence numbers, and
`replay=true` returns the current backlog and closes instead of waiting.
"""

from __future__ import annotations

import asyncio
import json
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import __version__
from .engine import Engine
from .errors import EmptyContent, UnknownAgent, UnknownSession

_POLL_SECONDS = 0.05


class SessionCreateRequest(BaseModel):
    root_agent: Optional[str] = None


class SessionCreated(BaseModel):
    session_id: str
    root_agent: str


class UserMessage(BaseModel):
    text: str = Field(min_length=1)


class TurnEventModel(BaseModel):
    sequence: int
    kind: str
    payload: dict[str, Any]


class TurnResponse(BaseModel):
    session_id: str
    events: list[TurnEventModel]


class HealthResponse(BaseModel):
    status: str = "ok"


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="taskchat", version=__version__)
    app.state.engine = engine

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse()

    @app.post("/sessions", status_code=201, response_model=SessionCreated)
    def create_session(body: Optional[SessionCreateRequest] = None) -> SessionCreated:
        try:
            session = engine.create_session(body.root_agent if body else None)
        except UnknownAgent as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SessionCreated(session_id=session.session_id, root_agent=session.active_agent)

    @app.post("/sessions/{session_id}/messages", response_model=TurnResponse)
    def send_message(session_id: str, body: UserMessage) -> TurnResponse:
        try:
            events = engine.handle_user_message(session_id, body.text)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except EmptyContent as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return TurnResponse(
            session_id=session_id,
            events=[TurnEventModel(**event.to_dict()) for event in events],
        )

    @app.get("/sessions/{session_id}/transcript", response_class=PlainTextResponse)
    def transcript(session_id: str, audience: str = "user") -> str:
        try:
            return engine.transcript(session_id, audience)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/sessions/{session_id}/snapshot")
    def snapshot(session_id: str) -> dict:
        try:
            return engine.snapshot(session_id)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/sessions/{session_id}/events")
    async def events(
        session_id: str,
        request: Request,
        after: Optional[int] = None,
        replay: bool = False,
    ) -> StreamingResponse:
        try:
            engine.session(session_id)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

        if after is None:
            header = request.headers.get("last-event-id")
            after = int(header) if header and header.lstrip("-").isdigit() else -1

        async def stream():
            cursor = after
            while True:
                batch = engine.events_after(session_id, cursor)
                for event in batch:
                    cursor = event.sequence
                    yield f"id: {event.sequence}\ndata: {json.dumps(event.to_dict())}\n\n"
                if replay:
                    return
                if await request.is_disconnected():
                    return
                if not batch:
                    await asyncio.sleep(_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(
    engine: Engine,
    host: str = "127.0.0.1",
    port: int = 8080,
    ui_dir: Optional[str] = None,
) -> None:
    """Run the service under uvicorn; in-flight turns finish on shutdown."""
    import uvicorn

    app = create_app(engine)
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port)
