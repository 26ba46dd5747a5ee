"""HTTP/JSON service for the interactive stroke -> solve -> layout loop.

A thin shell over the library: every payload is the byte-identical JSON the
corresponding library call produces, re-parsed into the response envelope.
Sessions are isolated; each carries a monotonically increasing revision
counter so clients can discard stale replies. At most one solve runs per
session (409 otherwise).
"""

from __future__ import annotations

import itertools
import json
import os
import threading

import anyio.to_thread
import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .curvature import estimate_curvature
from .energy import EnergyWeights
from .field import DirectionField, singularity_indices
from .mesh import MeshError, face_normals, load_mesh, save_mesh
from .metrics import stroke_deviation
from .quads import QuadError, planarity, planarize, trace_quad_layout
from .solver import SolverConfig, SolverError, solve_cdf
from .strokes import (
    Stroke,
    SurfaceLocator,
    TraceConfig,
    assign_segments,
    strokes_to_json,
    trace_streamline,
)


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        self.status = status
        self.detail = detail
        super().__init__(detail)


class Session:
    """Immutable mesh + frame, mutable strokes and result ids."""

    def __init__(self, sid: str, mesh, frame):
        self.id = sid
        self.mesh = mesh
        self.frame = frame
        self.locator = SurfaceLocator(mesh)
        self.strokes: list = []
        self.assignment = None
        self.field: DirectionField | None = None
        self.field_id: str | None = None
        self.quad_id: str | None = None
        self.revision = 0
        self.solve_lock = threading.Lock()


class SessionStore:
    def __init__(self, data_dir: str | None = None):
        self.sessions: dict[str, Session] = {}
        self.quads: dict[str, tuple] = {}  # quad_id -> (QuadMesh, session)
        self.data_dir = data_dir
        self.lock = threading.Lock()
        self._session_ids = itertools.count(1)
        self._field_ids = itertools.count(1)
        self._quad_ids = itertools.count(1)

    def create(self, mesh, frame) -> Session:
        with self.lock:
            sid = f"s{next(self._session_ids)}"
            session = Session(sid, mesh, frame)
            self.sessions[sid] = session
        self.persist(session, "mesh.obj", save_mesh(mesh))
        return session

    def get(self, sid: str) -> Session:
        with self.lock:
            if sid not in self.sessions:
                raise ApiError(404, f"unknown session {sid}")
            return self.sessions[sid]

    def get_quad(self, quad_id: str):
        with self.lock:
            if quad_id not in self.quads:
                raise ApiError(404, f"unknown quad {quad_id}")
            return self.quads[quad_id]

    def new_field_id(self) -> str:
        with self.lock:
            return f"f{next(self._field_ids)}"

    def new_quad_id(self) -> str:
        with self.lock:
            return f"q{next(self._quad_ids)}"

    def persist(self, session: Session, name: str, text: str):
        if self.data_dir is None:
            return
        d = os.path.join(self.data_dir, session.id)
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, name), "w") as fh:
            fh.write(text)


def _require(body, key, kind, path):
    if not isinstance(body, dict) or key not in body:
        raise ApiError(400, f"{path}: missing required field")
    val = body[key]
    if kind is not None and not isinstance(val, kind):
        names = "/".join(k.__name__ for k in (kind if isinstance(kind, tuple) else (kind,)))
        raise ApiError(400, f"{path}: expected {names}")
    return val


def _parse_strokes(body) -> list:
    entries = _require(body, "strokes", list, "strokes")
    strokes = []
    for i, entry in enumerate(entries):
        pts = _require(entry, "points", list, f"strokes[{i}].points")
        if len(pts) < 2:
            raise ApiError(400, f"strokes[{i}].points: need at least 2 points")
        try:
            arr = np.array(pts, dtype=np.float64)
        except (TypeError, ValueError):
            raise ApiError(400, f"strokes[{i}].points: not numeric")
        if arr.ndim != 2 or arr.shape[1] != 3 or not np.isfinite(arr).all():
            raise ApiError(400, f"strokes[{i}].points: expected finite (k, 3) array")
        strokes.append(Stroke(points=arr, faces=np.full(len(arr), -1, dtype=np.int64)))
    return strokes


def _solver_config(body) -> SolverConfig:
    cfg = SolverConfig(max_iters=800)  # interactive default, batch uses 2000
    raw = body.get("config") if isinstance(body, dict) else None
    if raw is None:
        return cfg
    if not isinstance(raw, dict):
        raise ApiError(400, "config: expected object")
    allowed = {
        "max_iters": int, "step_size": float, "lambda_conj_initial": float,
        "lambda_conj_final": float, "seed": int,
    }
    lambdas = {}
    for key, val in raw.items():
        if key in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if not isinstance(val, (int, float)):
                raise ApiError(400, f"config.{key}: expected number")
            lambdas[key] = float(val)
        elif key in allowed:
            if not isinstance(val, (int, float)):
                raise ApiError(400, f"config.{key}: expected number")
            setattr(cfg, key, allowed[key](val))
        else:
            raise ApiError(400, f"config.{key}: unknown option")
    if lambdas:
        cfg.weights = EnergyWeights(**lambdas)
    return cfg


async def _json_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ApiError(400, f"body: invalid JSON ({exc.msg})")
    if not isinstance(body, dict):
        raise ApiError(400, "body: expected JSON object")
    return body


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="cdfkit service")
    store = SessionStore(data_dir=data_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def api_error_handler(request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.post("/api/sessions")
    async def create_session(request: Request):
        body = await _json_body(request)
        obj_text = _require(body, "mesh", str, "mesh")
        try:
            mesh = load_mesh(obj_text)
            frame = estimate_curvature(mesh)
        except (MeshError, ValueError) as exc:
            raise ApiError(400, f"mesh: {exc}")
        session = store.create(mesh, frame)
        return {
            "session_id": session.id,
            "n": mesh.n,
            "m": mesh.m,
            "revision": session.revision,
        }

    @app.get("/api/sessions/{sid}/mesh")
    async def get_mesh(sid: str):
        session = store.get(sid)
        return {
            "positions": session.mesh.positions.tolist(),
            "faces": session.mesh.triangles.tolist(),
            "normals": face_normals(session.mesh).tolist(),
            "revision": session.revision,
        }

    @app.put("/api/sessions/{sid}/strokes")
    async def put_strokes(sid: str, request: Request):
        session = store.get(sid)
        body = await _json_body(request)
        strokes = _parse_strokes(body)
        try:
            assignment = assign_segments(session.mesh, [s.points for s in strokes])
        except ValueError as exc:
            raise ApiError(400, f"strokes: {exc}")
        session.strokes = strokes
        session.assignment = assignment
        session.revision += 1
        store.persist(session, "strokes.json", strokes_to_json(strokes))
        return {
            "segments": [len(segs) for segs in assignment.segments],
            "revision": session.revision,
        }

    @app.post("/api/sessions/{sid}/solve")
    async def solve_session(sid: str, request: Request):
        session = store.get(sid)
        body = await _json_body(request)
        cfg = _solver_config(body)
        if not session.solve_lock.acquire(blocking=False):
            raise ApiError(409, f"solve already running for session {sid}")
        try:
            has_strokes = (
                session.assignment is not None
                and session.assignment.total_segments() > 0
            )
            # run in a worker thread so concurrent requests (and their 409s)
            # are served while the solve is in flight
            field, trace = await anyio.to_thread.run_sync(
                lambda: solve_cdf(
                    session.mesh,
                    session.frame,
                    anchors=[],
                    strokes=session.assignment if has_strokes else None,
                    config=cfg,
                    allow_unconstrained=not has_strokes,
                )
            )
        except SolverError as exc:
            raise ApiError(422, f"solver failure: {exc}")
        finally:
            session.solve_lock.release()
        session.field = field
        session.field_id = store.new_field_id()
        session.revision += 1
        store.persist(session, "field.json", field.to_json())
        delta = None
        if has_strokes:
            delta = stroke_deviation(field, session.assignment)
        return {
            "field_id": session.field_id,
            "field": json.loads(field.to_json()),
            "energy": json.loads(trace[-1].to_json()),
            "delta": delta,
            "singularities": singularity_indices(field, session.mesh).count,
            "revision": session.revision,
        }

    @app.post("/api/sessions/{sid}/streamlines")
    async def streamlines(sid: str, request: Request):
        session = store.get(sid)
        if session.field is None:
            raise ApiError(400, "seeds: no solved field in this session")
        body = await _json_body(request)
        seeds = body.get("seeds")
        if seeds is None:
            count = body.get("count", 8)
            if not isinstance(count, int) or count < 1:
                raise ApiError(400, "count: expected positive integer")
            rng = np.random.default_rng(0)
            faces = rng.choice(session.mesh.m, size=min(count, session.mesh.m), replace=False)
            seeds = [
                {"point": session.mesh.positions[session.mesh.triangles[f]].mean(axis=0).tolist(),
                 "family": "u"}
                for f in faces
            ]
        elif not isinstance(seeds, list):
            raise ApiError(400, "seeds: expected list")
        cfg = TraceConfig(max_length=2.0 * session.mesh.bbox_diagonal())
        polylines = []
        for i, seed in enumerate(seeds):
            pt = _require(seed, "point", list, f"seeds[{i}].point")
            family = seed.get("family", "u")
            if family not in ("u", "v"):
                raise ApiError(400, f"seeds[{i}].family: expected 'u' or 'v'")
            point, face, _ = session.locator.snap(np.asarray(pt, dtype=np.float64))
            res = trace_streamline(
                session.field, session.mesh, face, point, family,
                int(seed.get("sign", 1)), cfg,
            )
            polylines.append(np.asarray(res.points).tolist())
        return {"polylines": polylines, "revision": session.revision}

    @app.post("/api/sessions/{sid}/quads")
    async def quads(sid: str, request: Request):
        session = store.get(sid)
        if session.field is None:
            raise ApiError(400, "spacing: no solved field in this session")
        body = await _json_body(request)
        spacing = _require(body, "spacing", (int, float), "spacing")
        try:
            layout = trace_quad_layout(session.field, session.mesh, float(spacing))
            before = planarity(layout)
        except QuadError as exc:
            raise ApiError(422, f"quad extraction failure: {exc}")
        quad_id = store.new_quad_id()
        with store.lock:
            store.quads[quad_id] = (layout, session)
        session.quad_id = quad_id
        session.revision += 1
        return {
            "quad_id": quad_id,
            "quad": {
                "positions": layout.positions.tolist(),
                "quads": layout.quads.tolist(),
            },
            "planarity_before": json.loads(before.to_json()),
            "revision": session.revision,
        }

    @app.post("/api/quads/{quad_id}/planarize")
    async def planarize_quad(quad_id: str, request: Request):
        layout, session = store.get_quad(quad_id)
        body = await _json_body(request)
        iters = body.get("iters", 100)
        if not isinstance(iters, int) or iters < 1:
            raise ApiError(400, "iters: expected positive integer")
        try:
            result, before, after = planarize(layout, reference=session.mesh, iters=iters)
        except QuadError as exc:
            raise ApiError(422, f"planarize failure: {exc}")
        with store.lock:
            store.quads[quad_id] = (result, session)
        session.revision += 1
        return {
            "quad": {
                "positions": result.positions.tolist(),
                "quads": result.quads.tolist(),
            },
            "planarity_before": json.loads(before.to_json()),
            "planarity_after": json.loads(after.to_json()),
            "revision": session.revision,
        }

    return app
