"""Localhost HTTP service for interactive handle-based editing.

Sessions hold a mesh with all factorizations precomputed so each edit is
a feedforward pass plus back-substitutions. Requests within one session
serialize on a lock; distinct sessions run concurrently. Errors use a
uniform ``{code, message, detail}`` JSON body.
"""

import itertools
import logging
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .config import RunConfig
from .editing import EditPipeline, face_distortion
from .mesh import DegenerateFaceError, MeshParseError, mesh_to_obj_string
from .pipeline import PreparedMesh

logger = logging.getLogger(__name__)

RIGID_TOLERANCE = 1e-6


class ServiceError(Exception):
    def __init__(self, status, code, message, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


class EditSession:
    """One mesh being edited: operators, bases, solvers, and current state."""

    def __init__(self, session_id, mesh, model, run_config):
        self.id = session_id
        self.lock = threading.Lock()
        prepared = PreparedMesh(mesh, k_feat=run_config.k_feat)
        self.mesh = mesh
        self.prepared = prepared
        self.pipeline = EditPipeline(
            mesh,
            prepared.ops,
            prepared.ctx,
            model,
            settings=run_config.recovery_settings(),
        )
        self.handles = np.zeros(0, dtype=np.int64)
        self.current_vertices = mesh.vertices.copy()
        # Warm the factorizations shared by every handle set.
        self.pipeline.ops.divergence()

    def set_handles(self, indices):
        indices = np.unique(np.asarray(indices, dtype=np.int64))
        bad = indices[(indices < 0) | (indices >= self.mesh.n_vertices)]
        if len(bad):
            raise ServiceError(
                422, "bad_handles", "handle indices out of range",
                {"offenders": bad.tolist()},
            )
        self.handles = indices
        if len(indices):
            self.pipeline.system_for(indices)

    def apply_edit(self, transforms):
        if not len(self.handles):
            raise ServiceError(409, "no_handles", "set handles before editing")
        targets = self._targets_from_transforms(transforms)
        try:
            deformed = self.pipeline.apply(self.handles, targets)
        except DegenerateFaceError as exc:
            raise ServiceError(
                409, "singular_jacobians",
                "provisional deformation collapses faces",
                {"faces": exc.face_indices},
            ) from exc
        self.current_vertices = deformed
        energies = face_distortion(
            self.pipeline.ctx.frames, self.mesh.vertices, deformed, self.mesh.faces
        )
        return deformed, energies

    def _targets_from_transforms(self, transforms):
        targets = self.mesh.vertices[self.handles].copy()
        for entry in transforms:
            rotation = np.asarray(entry.get("rotation", np.eye(3).ravel().tolist()),
                                  dtype=np.float64).reshape(3, 3)
            translation = np.asarray(entry.get("translation", [0.0, 0.0, 0.0]),
                                     dtype=np.float64)
            if (
                np.abs(rotation @ rotation.T - np.eye(3)).max() > RIGID_TOLERANCE
                or abs(np.linalg.det(rotation) - 1.0) > RIGID_TOLERANCE
            ):
                raise ServiceError(
                    422, "non_rigid_transform",
                    "rotations must be proper and orthogonal",
                    {"rotation": rotation.ravel().tolist()},
                )
            selector = entry.get("indices", "all")
            if selector == "all":
                rows = np.arange(len(self.handles))
            else:
                requested = np.asarray(selector, dtype=np.int64)
                missing = np.setdiff1d(requested, self.handles)
                if len(missing):
                    raise ServiceError(
                        422, "bad_handles",
                        "transform references vertices outside the handle set",
                        {"offenders": missing.tolist()},
                    )
                rows = np.searchsorted(self.handles, requested)
            targets[rows] = self.mesh.vertices[self.handles[rows]] @ rotation.T + translation
        return targets


class EditService:
    """Session registry bound to one loaded checkpoint."""

    def __init__(self, model, run_config=None):
        self.model = model
        self.run_config = run_config or RunConfig()
        self.sessions = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def create_session(self, obj_text):
        from .mesh import _parse_obj

        try:
            mesh = _parse_obj(obj_text, "<upload>")
        except (MeshParseError, DegenerateFaceError, ValueError) as exc:
            raise ServiceError(400, "bad_mesh", "mesh rejected", str(exc)) from exc
        session_id = f"s{next(self._ids)}"
        session = EditSession(session_id, mesh, self.model, self.run_config)
        with self._lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id):
        with self._lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return session


def build_app(service):
    """The FastAPI application for an :class:`EditService`."""
    app = FastAPI(title="jacdeform edit service")

    @app.exception_handler(ServiceError)
    async def handle_service_error(request, exc):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(service.sessions)}

    @app.post("/session")
    async def create_session(request: Request):
        body = (await request.body()).decode("utf-8", errors="replace")
        session = service.create_session(body)
        return {"id": session.id, "vertices": session.mesh.n_vertices,
                "faces": session.mesh.n_faces}

    @app.post("/session/{session_id}/handles")
    async def set_handles(session_id: str, payload: dict):
        session = service.get(session_id)
        indices = payload.get("indices", [])
        with session.lock:
            session.set_handles(indices)
        return {"handles": session.handles.tolist()}

    @app.post("/session/{session_id}/edit")
    async def apply_edit(session_id: str, payload: dict):
        session = service.get(session_id)
        transforms = payload.get("transforms", [])
        with session.lock:
            deformed, energies = session.apply_edit(transforms)
        face_energy = [
            None if not np.isfinite(e) else float(e) for e in energies
        ]
        return {
            "vertices": deformed.ravel().tolist(),
            "faceEnergy": face_energy,
        }

    @app.get("/session/{session_id}/mesh")
    def get_mesh(session_id: str):
        session = service.get(session_id)
        with session.lock:
            mesh = session.mesh.with_vertices(session.current_vertices)
        return PlainTextResponse(mesh_to_obj_string(mesh))

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
