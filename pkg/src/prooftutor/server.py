"""HTTP service over sessions (JSON wire format)."""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .logic import render_formula
from .session import Session, SessionError, open_session
from .theory import Library, TheoryError, render_theory


class CreateSession(BaseModel):
    exercise: str
    theory: Optional[str] = None
    depth: Optional[int] = None
    socratic: bool = False


class StepBody(BaseModel):
    text: str


def create_app(library: Optional[Library] = None) -> FastAPI:
    lib = library or Library()
    app = FastAPI(title="proof tutor", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, Session] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> tuple[Session, threading.Lock]:
        with registry_lock:
            session = sessions.get(session_id)
            if session is None:
                raise HTTPException(404, f"unknown session {session_id!r}")
            return session, locks[session_id]

    @app.get("/exercises")
    def exercises():
        out = []
        for ex_id in lib.exercises():
            ex = lib.exercise(ex_id)
            out.append(
                {
                    "id": ex.id,
                    "theory": ex.theory_name,
                    "goal": render_formula(ex.goal),
                    "depth": ex.depth_limit,
                    "strategy": ex.strategy,
                }
            )
        return out

    @app.get("/theories/{name}")
    def theory(name: str):
        try:
            t = lib.theory(name)
        except TheoryError as e:
            raise HTTPException(404, str(e)) from None
        return {
            "name": t.name,
            "assertions": [
                {
                    "label": a.label,
                    "kind": a.kind,
                    "formula": render_formula(a.formula),
                    "message": a.message,
                }
                for a in t.assertions
            ],
            "source": render_theory(t),
        }

    @app.post("/sessions")
    def create(body: CreateSession):
        try:
            session = open_session(
                body.exercise, lib, theory_name=body.theory, depth=body.depth,
                socratic=body.socratic,
            )
        except TheoryError as e:
            raise HTTPException(404, str(e)) from None
        with registry_lock:
            sessions[session.id] = session
            locks[session.id] = threading.Lock()
        return {"session_id": session.id, "state": session.state_view()}

    @app.get("/sessions/{session_id}")
    def state(session_id: str):
        session, lock = get_session(session_id)
        with lock:
            return session.state_view()

    @app.post("/sessions/{session_id}/steps")
    def step(session_id: str, body: StepBody):
        session, lock = get_session(session_id)
        with lock:
            try:
                out = session.submit_step(body.text)
            except SessionError as e:
                raise HTTPException(409, str(e)) from None
            return out.as_dict()

    @app.post("/sessions/{session_id}/hint")
    def hint(session_id: str):
        session, lock = get_session(session_id)
        with lock:
            try:
                h = session.request_hint()
            except SessionError as e:
                raise HTTPException(409, str(e)) from None
            return {"category": h.category, "category_name": h.category_name, "text": h.text}

    return app
