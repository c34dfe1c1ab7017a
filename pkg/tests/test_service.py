"""HTTP editing service: endpoints, isolation, idempotence, latency."""

import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from jacdeform import shapes
from jacdeform.config import RunConfig
from jacdeform.mesh import mesh_to_obj_string
from jacdeform.network import JacobianNet
from jacdeform.service import EditService, build_app


@pytest.fixture(scope="module")
def client():
    config = RunConfig(k_feat=40, hidden_width=24, seed=1)
    model = JacobianNet(config.network_config(200))
    service = EditService(model, config)
    return TestClient(build_app(service))


@pytest.fixture(scope="module")
def bar_obj():
    return mesh_to_obj_string(shapes.box_bar(8, 3))


def make_session(client, obj_text):
    response = client.post("/session", content=obj_text)
    assert response.status_code == 200, response.text
    return response.json()["id"]


class TestSessionLifecycle:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_create_session(self, client, bar_obj):
        response = client.post("/session", content=bar_obj)
        assert response.status_code == 200
        body = response.json()
        assert body["id"].startswith("s")
        assert body["vertices"] > 0

    def test_malformed_mesh_rejected(self, client):
        response = client.post("/session", content="v 0 0\nf 1 2 3\n")
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "bad_mesh"
        assert "coordinates" in body["detail"]

    def test_unknown_session_404(self, client):
        response = client.get("/session/nope/mesh")
        assert response.status_code == 404
        assert response.json()["code"] == "unknown_session"

    def test_fresh_session_returns_original(self, client, bar_obj):
        session = make_session(client, bar_obj)
        response = client.get(f"/session/{session}/mesh")
        assert response.status_code == 200
        assert response.text == bar_obj


class TestHandles:
    def test_set_and_clear(self, client, bar_obj):
        session = make_session(client, bar_obj)
        response = client.post(f"/session/{session}/handles", json={"indices": [3, 1, 3]})
        assert response.status_code == 200
        assert response.json()["handles"] == [1, 3]
        response = client.post(f"/session/{session}/handles", json={"indices": []})
        assert response.status_code == 200
        assert response.json()["handles"] == []

    def test_out_of_range_listed(self, client, bar_obj):
        session = make_session(client, bar_obj)
        response = client.post(
            f"/session/{session}/handles", json={"indices": [0, 100000]}
        )
        assert response.status_code == 422
        assert response.json()["detail"]["offenders"] == [100000]


class TestEdits:
    def _handles(self, mesh):
        x = mesh.vertices[:, 0]
        left = np.nonzero(x < x.min() + 1e-9)[0]
        right = np.nonzero(x > x.max() - 1e-9)[0]
        return np.concatenate([left, right]).tolist(), len(left)

    def test_identity_edit_fixed_point(self, client, bar_obj):
        mesh = shapes.box_bar(8, 3)
        session = make_session(client, bar_obj)
        handles, _ = self._handles(mesh)
        client.post(f"/session/{session}/handles", json={"indices": handles})
        response = client.post(
            f"/session/{session}/edit",
            json={"transforms": [{"indices": "all",
                                  "rotation": np.eye(3).ravel().tolist(),
                                  "translation": [0.0, 0.0, 0.0]}]},
        )
        assert response.status_code == 200
        vertices = np.asarray(response.json()["vertices"]).reshape(-1, 3)
        assert np.abs(vertices - mesh.vertices).max() <= 1e-6
        assert len(response.json()["faceEnergy"]) == mesh.n_faces

    def test_non_rigid_transform_rejected(self, client, bar_obj):
        session = make_session(client, bar_obj)
        client.post(f"/session/{session}/handles", json={"indices": [0, 1, 2]})
        squash = np.diag([2.0, 1.0, 1.0])
        response = client.post(
            f"/session/{session}/edit",
            json={"transforms": [{"indices": "all",
                                  "rotation": squash.ravel().tolist(),
                                  "translation": [0, 0, 0]}]},
        )
        assert response.status_code == 422
        assert response.json()["code"] == "non_rigid_transform"

    def test_edit_before_handles_rejected(self, client, bar_obj):
        session = make_session(client, bar_obj)
        response = client.post(f"/session/{session}/edit", json={"transforms": []})
        assert response.status_code == 409

    def test_idempotent(self, client, bar_obj):
        mesh = shapes.box_bar(8, 3)
        session = make_session(client, bar_obj)
        handles, n_left = self._handles(mesh)
        client.post(f"/session/{session}/handles", json={"indices": handles})
        payload = {
            "transforms": [
                {"indices": handles[n_left:],
                 "rotation": np.eye(3).ravel().tolist(),
                 "translation": [0.0, 0.0, 0.1]}
            ]
        }
        first = client.post(f"/session/{session}/edit", json=payload).json()
        second = client.post(f"/session/{session}/edit", json=payload).json()
        assert first["vertices"] == second["vertices"]

    def test_sessions_isolated(self, client, bar_obj):
        mesh = shapes.box_bar(8, 3)
        s1 = make_session(client, bar_obj)
        s2 = make_session(client, bar_obj)
        handles, n_left = self._handles(mesh)
        for session in (s1, s2):
            client.post(f"/session/{session}/handles", json={"indices": handles})
        payload = {
            "transforms": [
                {"indices": handles[n_left:],
                 "rotation": np.eye(3).ravel().tolist(),
                 "translation": [0.0, 0.2, 0.0]}
            ]
        }
        client.post(f"/session/{s1}/edit", json=payload)
        untouched = client.get(f"/session/{s2}/mesh")
        assert untouched.text == bar_obj
        edited = client.get(f"/session/{s1}/mesh")
        assert edited.text != bar_obj

    def test_interleaved_edits_consistent(self, client, bar_obj):
        mesh = shapes.box_bar(8, 3)
        sessions = [make_session(client, bar_obj) for _ in range(2)]
        handles, n_left = self._handles(mesh)
        for session in sessions:
            client.post(f"/session/{session}/handles", json={"indices": handles})
        results = {}

        def edit(session, dz):
            payload = {
                "transforms": [
                    {"indices": handles[n_left:],
                     "rotation": np.eye(3).ravel().tolist(),
                     "translation": [0.0, 0.0, dz]}
                ]
            }
            results[session] = client.post(
                f"/session/{session}/edit", json=payload
            ).json()["vertices"]

        threads = [
            threading.Thread(target=edit, args=(sessions[0], 0.1)),
            threading.Thread(target=edit, args=(sessions[1], -0.1)),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        a = np.asarray(results[sessions[0]]).reshape(-1, 3)
        b = np.asarray(results[sessions[1]]).reshape(-1, 3)
        assert not np.allclose(a, b)


class TestLatency:
    def test_edit_latency_budget(self):
        # ~5k-vertex mesh, trained-scale settings: session creation <= 5 s,
        # one non-rigid edit round trip <= 1 s after handles are set.
        config = RunConfig(hidden_width=256, k_feat=128, seed=1)
        model = JacobianNet(config.network_config(5000))
        local = TestClient(build_app(EditService(model, config)))
        big = shapes.box_bar(36, 10, length=4.0)  # ~4.6k vertices
        obj = mesh_to_obj_string(big)
        start = time.perf_counter()
        response = local.post("/session", content=obj)
        setup_time = time.perf_counter() - start
        session = response.json()["id"]
        x = big.vertices[:, 0]
        left = np.nonzero(x < x.min() + 1e-9)[0].tolist()
        right = np.nonzero(x > x.max() - 1e-9)[0].tolist()
        start = time.perf_counter()
        local.post(f"/session/{session}/handles", json={"indices": left + right})
        handles_time = time.perf_counter() - start
        payload = {
            "transforms": [
                {"indices": right,
                 "rotation": np.eye(3).ravel().tolist(),
                 "translation": [0.0, 0.0, 0.15]}
            ]
        }
        start = time.perf_counter()
        response = local.post(f"/session/{session}/edit", json=payload)
        edit_time = time.perf_counter() - start
        assert response.status_code == 200
        assert setup_time <= 5.0, f"session creation took {setup_time:.2f}s"
        assert edit_time <= 1.0, f"edit took {edit_time:.2f}s (handles {handles_time:.2f}s)"
