"""NumPy reference implementations of the per-face kernels.

These are the fallback path selected when the compiled extension is not
available (or is disabled via ``JACDEFORM_PURE_PYTHON=1``). The compiled
module mirrors these signatures exactly; ``tests/test_kernels.py`` keeps
the two paths in agreement.
"""

import numpy as np

BACKEND = "numpy"


def face_cross_products(vertices, faces):
    """Unnormalized face normals ``(v1 - v0) x (v2 - v0)``, shape (F, 3)."""
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    return np.cross(e1, e2)


def face_areas_normals(vertices, faces):
    """Per-face areas and unit normals.

    Faces whose cross product has zero norm get a zero normal instead of
    NaN; callers decide whether that is an error.

    Returns
    -------
    areas : (F,) float64
    normals : (F, 3) float64
    """
    cross = face_cross_products(vertices, faces)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    safe = np.where(norms > 0.0, norms, 1.0)
    normals = cross / safe[:, None]
    normals[norms == 0.0] = 0.0
    return areas, normals


def cot_laplacian_triplets(vertices, faces):
    """COO triplets of the cotangent stiffness matrix (PSD convention).

    For each face corner the half-cotangent of its angle is accumulated on
    the opposite edge: off-diagonals receive ``-w``, the two diagonal
    entries ``+w``. Summing duplicate triplets yields the symmetric matrix
    with zero row sums.

    Returns
    -------
    rows, cols : (12 F,) int64
    vals : (12 F,) float64
    """
    nf = faces.shape[0]
    rows = np.empty(12 * nf, dtype=np.int64)
    cols = np.empty(12 * nf, dtype=np.int64)
    vals = np.empty(12 * nf, dtype=np.float64)
    out = 0
    for corner in range(3):
        c = faces[:, corner]
        a = faces[:, (corner + 1) % 3]
        b = faces[:, (corner + 2) % 3]
        u = vertices[a] - vertices[c]
        v = vertices[b] - vertices[c]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cot = np.einsum("ij,ij->i", u, v) / cross
        w = 0.5 * cot
        block = slice(out, out + nf)
        rows[block], cols[block], vals[block] = a, b, -w
        out += nf
        block = slice(out, out + nf)
        rows[block], cols[block], vals[block] = b, a, -w
        out += nf
        block = slice(out, out + nf)
        rows[block], cols[block], vals[block] = a, a, w
        out += nf
        block = slice(out, out + nf)
        rows[block], cols[block], vals[block] = b, b, w
        out += nf
    return rows, cols, vals


def lumped_mass(vertices, faces):
    """Barycentric lumped vertex areas: one third of each incident face."""
    areas, _ = face_areas_normals(vertices, faces)
    masses = np.zeros(vertices.shape[0], dtype=np.float64)
    third = areas / 3.0
    for corner in range(3):
        np.add.at(masses, faces[:, corner], third)
    return masses


def face_frames(vertices, faces):
    """Per-face frame matrices, rows ``[v1 - v0, v2 - v0, n]``, shape (F, 3, 3)."""
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0
    _, normals = face_areas_normals(vertices, faces)
    frames = np.empty((faces.shape[0], 3, 3), dtype=np.float64)
    frames[:, 0, :] = e1
    frames[:, 1, :] = e2
    frames[:, 2, :] = normals
    return frames


def compose_jacobians(frames_src, frames_dst):
    """Batch solve ``frames_src @ J = frames_dst`` for each face pair."""
    return np.linalg.solve(frames_src, frames_dst)


def det3_batch(mats):
    """Determinants of a (F, 3, 3) stack."""
    return np.linalg.det(mats)


def nn_search(query, points, block_size=2048):
    """Exact nearest neighbor of each query row among ``points`` rows.

    Ties resolve to the lowest point index (argmin semantics). Blocked to
    bound the temporary distance matrix.
    """
    n = query.shape[0]
    out = np.empty(n, dtype=np.int64)
    sq_points = np.einsum("ij,ij->i", points, points)
    for start in range(0, n, block_size):
        chunk = query[start : start + block_size]
        d2 = sq_points[None, :] - 2.0 * (chunk @ points.T)
        out[start : start + block_size] = np.argmin(d2, axis=1)
    return out


def vertex_normals(vertices, faces):
    """Area-weighted vertex normals with degenerate faces skipped.

    Returns
    -------
    normals : (V, 3) float64, zero rows where nothing accumulated
    n_skipped : int, number of zero-area faces ignored
    """
    cross = face_cross_products(vertices, faces)
    norms = np.linalg.norm(cross, axis=1)
    good = norms > 0.0
    acc = np.zeros_like(vertices, dtype=np.float64)
    for corner in range(3):
        np.add.at(acc, faces[good, corner], cross[good])
    lens = np.linalg.norm(acc, axis=1)
    safe = np.where(lens > 0.0, lens, 1.0)
    acc /= safe[:, None]
    return acc, int(np.count_nonzero(~good))
