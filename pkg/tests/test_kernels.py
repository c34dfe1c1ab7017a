"""Agreement between the compiled kernel core and the NumPy fallback."""

import numpy as np
import pytest

from jacdeform import _kernels, shapes
from jacdeform._kernels import _ref


@pytest.fixture(scope="module")
def mesh_arrays():
    mesh = shapes.icosphere(3)
    vertices = shapes.smooth_warp(mesh.vertices, seed=1, amplitude=0.1)
    return np.ascontiguousarray(vertices), mesh.faces


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "numpy")


def test_face_areas_normals_agree(mesh_arrays):
    v, f = mesh_arrays
    a1, n1 = _kernels.face_areas_normals(v, f)
    a2, n2 = _ref.face_areas_normals(v, f)
    np.testing.assert_allclose(a1, a2, rtol=1e-14)
    np.testing.assert_allclose(n1, n2, rtol=0, atol=1e-14)


def test_cot_triplets_agree(mesh_arrays):
    from scipy import sparse

    v, f = mesh_arrays
    nv = len(v)

    def assemble(impl):
        r, c, w = impl.cot_laplacian_triplets(v, f)
        return sparse.csr_matrix((w, (r, c)), shape=(nv, nv))

    diff = assemble(_kernels) - assemble(_ref)
    assert abs(diff).max() < 1e-13


def test_lumped_mass_agree(mesh_arrays):
    v, f = mesh_arrays
    np.testing.assert_allclose(
        _kernels.lumped_mass(v, f), _ref.lumped_mass(v, f), rtol=1e-14
    )


def test_frames_and_compose_agree(mesh_arrays):
    v, f = mesh_arrays
    fr1 = _kernels.face_frames(v, f)
    fr2 = _ref.face_frames(v, f)
    np.testing.assert_allclose(fr1, fr2, rtol=0, atol=1e-14)
    v2 = shapes.smooth_warp(v, seed=2, amplitude=0.1)
    dst = _kernels.face_frames(np.ascontiguousarray(v2), f)
    j1 = _kernels.compose_jacobians(fr1, dst)
    j2 = _ref.compose_jacobians(fr2, dst)
    np.testing.assert_allclose(j1, j2, rtol=1e-10, atol=1e-12)


def test_det3_agree(mesh_arrays):
    v, f = mesh_arrays
    frames = _kernels.face_frames(v, f)
    np.testing.assert_allclose(
        _kernels.det3_batch(frames), _ref.det3_batch(frames), rtol=1e-12
    )


def test_nn_search_agree():
    rng = np.random.default_rng(3)
    query = rng.normal(size=(257, 3))
    points = rng.normal(size=(401, 3))
    np.testing.assert_array_equal(
        _kernels.nn_search(query, points), _ref.nn_search(query, points)
    )


def test_nn_search_tie_lowest_index():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    query = np.array([[0.0, 0.0, 0.0]])
    assert _kernels.nn_search(query, points)[0] == 0
    assert _ref.nn_search(query, points)[0] == 0


def test_vertex_normals_agree_and_skip(mesh_arrays):
    v, f = mesh_arrays
    n1, s1 = _kernels.vertex_normals(v, f)
    n2, s2 = _ref.vertex_normals(v, f)
    assert s1 == s2 == 0
    np.testing.assert_allclose(n1, n2, rtol=0, atol=1e-13)
    # collapse one face and confirm both paths skip it
    v_bad = v.copy()
    v_bad[f[0, 1]] = v_bad[f[0, 0]]
    v_bad[f[0, 2]] = v_bad[f[0, 0]]
    degenerate = np.count_nonzero(
        np.linalg.norm(_ref.face_cross_products(v_bad, f), axis=1) == 0.0
    )
    _, s1 = _kernels.vertex_normals(np.ascontiguousarray(v_bad), f)
    _, s2 = _ref.vertex_normals(v_bad, f)
    assert s1 == s2 == degenerate
