"""HTTP localization service and walkthrough-session endpoints.

The loaded database is immutable and shared read-only across request handlers;
/localize is a pure function of (database, request body). Walkthrough sessions
are the only mutable state: they live in memory behind a lock, expire after
ten idle minutes, and synthesize their own observations server-side so clients
stay thin.
"""
from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .db import RpDatabase, keypoints_from_list
from .fingerprints import Fingerprint
from .pipeline import Localizer, LocalizationResult, Method, Query
from .pose import build_frustum, eye_pose_at, visible_objects
from .synth import SynthConfig, SynthWorld, project_view, sample_fingerprint, stored_headings, synth_world

SESSION_TTL_SECONDS = 600.0
TURN_INCREMENT_DEG = 15.0


class KeypointIn(BaseModel):
    px: float
    py: float
    sigma: float = Field(default=1.0, gt=0)
    descriptor: list[float]


class LocalizeRequest(BaseModel):
    fingerprint: dict[str, float]
    keypoints: list[KeypointIn] = []
    heading: float = Field(default=0.0, ge=0, lt=360)
    device_id: str = ""
    method: Method = Method.COMBINED_DR


class VisibleObjectOut(BaseModel):
    id: int
    label: str
    forward: float
    right: float
    up: float
    bearing: float
    distance: float


class RankedOut(BaseModel):
    rp_id: int
    image_index: int
    similarity: int
    dr: float | None


class DiagnosticsOut(BaseModel):
    ranked: list[RankedOut]
    fallback: bool


class LocalizeResponse(BaseModel):
    rp_id: int
    subarea_id: int | None
    position: list[float]
    method: Method
    visible_objects: list[VisibleObjectOut]
    diagnostics: DiagnosticsOut


class SessionCreateRequest(BaseModel):
    seed: int | None = None
    method: Method = Method.COMBINED_DR


class SessionCreateResponse(BaseModel):
    session_id: str
    true_position: list[float]
    heading: float


class StepRequest(BaseModel):
    action: str = Field(pattern="^(forward|back|turn_left|turn_right)$")
    method: Method | None = None


class RelocalizeRequest(BaseModel):
    method: Method


class StepResponse(BaseModel):
    true_position: list[float]
    heading: float
    estimate: LocalizeResponse
    visible_objects: list[VisibleObjectOut]


@dataclass(eq=False)
class _Session:
    id: str
    seed: int
    method: Method
    true_position: np.ndarray
    heading: float
    created_at: float
    last_seen: float
    step_count: int = 0
    last_query: Query | None = None


def _localize_response(app_state, query: Query, result: LocalizationResult) -> LocalizeResponse:
    pose_cfg = app_state.db.pose_cfg
    pose = eye_pose_at(result.position, query.heading, pose_cfg)
    frustum = build_frustum(pose, pose_cfg)
    visible = [
        VisibleObjectOut(id=obj.id, label=obj.label, forward=lp.forward, right=lp.right,
                         up=lp.up, bearing=lp.bearing, distance=lp.distance)
        for obj, lp in visible_objects(pose, frustum, app_state.db.map.objects)
    ]
    return LocalizeResponse(
        rp_id=result.rp_id,
        subarea_id=result.subarea_id,
        position=[float(v) for v in result.position],
        method=result.method,
        visible_objects=visible,
        diagnostics=DiagnosticsOut(
            ranked=[RankedOut(rp_id=e.rp_id, image_index=e.image_index,
                              similarity=e.similarity, dr=e.dr) for e in result.ranked],
            fallback=result.fallback,
        ),
    )


class _AppState:
    def __init__(self, db: RpDatabase):
        self.db = db
        self.localizer = Localizer(db.map, db.cluster_cfg, db.match_cfg)
        self.world: SynthWorld = synth_world(db.map.width, db.map.depth, db.synth_cfg)
        self.sessions: dict[str, _Session] = {}
        self.lock = threading.Lock()

    def purge_expired(self, now: float | None = None) -> None:
        now = time.monotonic() if now is None else now
        dead = [sid for sid, s in self.sessions.items() if now - s.last_seen > SESSION_TTL_SECONDS]
        for sid in dead:
            del self.sessions[sid]

    def get_session(self, session_id: str) -> _Session:
        self.purge_expired()
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        session.last_seen = time.monotonic()
        return session

    def observe(self, session: _Session) -> Query:
        """Fresh synthetic observation at the session's true pose."""
        cfg: SynthConfig = self.db.synth_cfg
        rng = np.random.default_rng([session.seed, 3, session.step_count])
        fp = sample_fingerprint(self.world, session.true_position, cfg, rng)
        view = project_view(
            eye_pose_at(session.true_position, session.heading, self.db.pose_cfg),
            self.world.landmarks, cfg, self.db.pose_cfg, rng,
        )
        return Query(fingerprint=fp, keypoints=view, heading=session.heading,
                     device_id="walkthrough")


def create_app(db: RpDatabase) -> FastAPI:
    if not db.map.subareas:
        raise ValueError("database has no subareas; run build-db first")
    app = FastAPI(title="arloc", version="0.1.0")
    state = _AppState(db)
    app.state.arloc = state

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc):  # malformed bodies are a client error
        return JSONResponse(status_code=400, content=jsonable_encoder(
            {"error": "malformed request", "detail": exc.errors()}))

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/v1/map")
    def map_geometry():
        m = db.map
        return {
            "width": m.width,
            "depth": m.depth,
            "interval": m.interval,
            "rps": [{"id": rp.id, "position": [float(v) for v in rp.position]}
                    for rp in sorted(m.rps, key=lambda rp: rp.id)],
            "subareas": [{"id": sa.id, "member_rp_ids": list(sa.member_rp_ids)}
                         for sa in sorted(m.subareas, key=lambda s: s.id)],
            "objects": [{"id": o.id, "label": o.label,
                         "position": [float(v) for v in o.position]}
                        for o in m.objects],
        }

    def _to_query(req: LocalizeRequest) -> Query:
        try:
            fp = Fingerprint(readings=req.fingerprint)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        kps = keypoints_from_list([k.model_dump() for k in req.keypoints])
        return Query(fingerprint=fp, keypoints=kps, heading=req.heading,
                     device_id=req.device_id)

    @app.post("/api/v1/localize", response_model=LocalizeResponse)
    def localize_endpoint(req: LocalizeRequest):
        query = _to_query(req)
        try:
            result = state.localizer.localize(query, req.method)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return _localize_response(state, query, result)

    def _step_response(session: _Session) -> StepResponse:
        query = session.last_query
        result = state.localizer.localize(query, session.method)
        estimate = _localize_response(state, query, result)
        return StepResponse(
            true_position=[float(v) for v in session.true_position],
            heading=session.heading,
            estimate=estimate,
            visible_objects=estimate.visible_objects,
        )

    @app.post("/api/v1/session", response_model=SessionCreateResponse)
    def create_session(req: SessionCreateRequest):
        seed = req.seed if req.seed is not None else secrets.randbits(31)
        rng = np.random.default_rng([seed, 0])
        rps = sorted(db.map.rps, key=lambda rp: rp.id)
        start = rps[int(rng.integers(len(rps)))]
        headings = stored_headings(db.synth_cfg)
        heading = headings[int(rng.integers(len(headings)))]
        now = time.monotonic()
        session = _Session(
            id=secrets.token_hex(16), seed=int(seed), method=req.method,
            true_position=start.position.copy(), heading=heading,
            created_at=now, last_seen=now,
        )
        with state.lock:
            state.purge_expired(now)
            session.last_query = state.observe(session)
            state.sessions[session.id] = session
        return SessionCreateResponse(
            session_id=session.id,
            true_position=[float(v) for v in session.true_position],
            heading=session.heading,
        )

    @app.post("/api/v1/session/{session_id}/step", response_model=StepResponse)
    def step(session_id: str, req: StepRequest):
        m = db.map
        with state.lock:
            session = state.get_session(session_id)
            if req.method is not None:
                session.method = req.method
            if req.action == "turn_left":
                session.heading = (session.heading - TURN_INCREMENT_DEG) % 360.0
            elif req.action == "turn_right":
                session.heading = (session.heading + TURN_INCREMENT_DEG) % 360.0
            else:
                sign = 1.0 if req.action == "forward" else -1.0
                theta = np.radians(session.heading)
                stride = sign * m.interval * np.array([np.sin(theta), 0.0, np.cos(theta)])
                pos = session.true_position + stride
                pos[0] = float(np.clip(pos[0], -m.width / 2, m.width / 2))
                pos[2] = float(np.clip(pos[2], -m.depth / 2, m.depth / 2))
                session.true_position = pos
            session.step_count += 1
            session.last_query = state.observe(session)
            return _step_response(session)

    @app.post("/api/v1/session/{session_id}/localize", response_model=StepResponse)
    def relocalize(session_id: str, req: RelocalizeRequest):
        with state.lock:
            session = state.get_session(session_id)
            session.method = req.method
            return _step_response(session)

    @app.delete("/api/v1/session/{session_id}")
    def delete_session(session_id: str):
        with state.lock:
            state.get_session(session_id)
            del state.sessions[session_id]
        return {"deleted": True}

    return app


def serve(db: RpDatabase, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(db), host=host, port=port, log_level="warning")
